##############################################################################
#
# Copyright (c) 2001, 2002 Zope Foundation and Contributors.
# Copyright (c) 2024 lepspace contributors.
# All Rights Reserved.
#
# This software is subject to the provisions of the Zope Public License,
# Version 2.1 (ZPL).  A copy of the ZPL should accompany this distribution.
# THIS SOFTWARE IS PROVIDED "AS IS" AND ANY AND ALL EXPRESS OR IMPLIED
# WARRANTIES ARE DISCLAIMED, INCLUDING, BUT NOT LIMITED TO, THE IMPLIED
# WARRANTIES OF TITLE, MERCHANTABILITY, AGAINST INFRINGEMENT, AND FITNESS
# FOR A PARTICULAR PURPOSE.
#
##############################################################################
"""Worker threads for independent units of numerical work.

Sampling checks, per-site viscosity checks and per-source distance runs
are independent of each other.  They are wrapped in ``Task`` objects and
serviced by a fixed pool of threads; results always come back in
submission order so reports are assembled deterministically.
"""

import threading
import time
from collections import deque

from .utilities import logger


class Task(object):
    """One unit of work: ``func(*args)``, result kept on the task."""

    complete = False
    cancelled = False
    result = None
    error = None
    logger = logger

    def __init__(self, func, *args):
        self.func = func
        self.args = args

    def service(self):
        try:
            self.result = self.func(*self.args)
        except Exception as exc:
            self.error = exc
        finally:
            self.complete = True

    def cancel(self):
        self.cancelled = True
        self.complete = True

    def __repr__(self):
        name = getattr(self.func, "__name__", repr(self.func))
        return "<Task %s%r>" % (name, self.args)


class ThreadedTaskDispatcher(object):
    """A Task Dispatcher that creates a thread for each task.
    """

    stop_count = 0  # Number of threads that will stop soon.
    active_count = 0  # Number of currently active threads
    logger = logger

    def __init__(self):
        self.threads = set()
        self.queue = deque()
        self.lock = threading.Lock()
        self.queue_cv = threading.Condition(self.lock)
        self.thread_exit_cv = threading.Condition(self.lock)
        self.done_cv = threading.Condition(self.lock)
        self.pending = 0

    def start_new_thread(self, target, thread_no):
        t = threading.Thread(
            target=target, name="lepspace-{}".format(thread_no), args=(thread_no,)
        )
        t.daemon = True
        t.start()

    def handler_thread(self, thread_no):
        while True:
            with self.lock:
                while not self.queue and self.stop_count == 0:
                    # Mark ourselves as idle before waiting to be
                    # woken up, then we will once again be active
                    self.active_count -= 1
                    self.queue_cv.wait()
                    self.active_count += 1

                if self.stop_count > 0:
                    self.active_count -= 1
                    self.stop_count -= 1
                    self.threads.discard(thread_no)
                    self.thread_exit_cv.notify()
                    break

                task = self.queue.popleft()
            try:
                task.service()
            except BaseException:
                self.logger.exception("Exception when servicing %r", task)
            finally:
                with self.lock:
                    self.pending -= 1
                    self.done_cv.notify_all()

    def set_thread_count(self, count):
        with self.lock:
            threads = self.threads
            thread_no = 0
            running = len(threads) - self.stop_count
            while running < count:
                # Start threads.
                while thread_no in threads:
                    thread_no = thread_no + 1
                threads.add(thread_no)
                running += 1
                self.start_new_thread(self.handler_thread, thread_no)
                self.active_count += 1
                thread_no = thread_no + 1
            if running > count:
                # Stop threads.
                self.stop_count += running - count
                self.queue_cv.notify_all()

    def add_task(self, task):
        with self.lock:
            self.queue.append(task)
            self.pending += 1
            self.queue_cv.notify()

    def run_all(self, tasks):
        """Service every task and return the results in submission order.

        Without worker threads the tasks run inline in the calling thread.
        The first task error is re-raised after all tasks finished."""
        tasks = list(tasks)
        if not self.threads:
            for task in tasks:
                task.service()
        else:
            for task in tasks:
                self.add_task(task)
            with self.lock:
                while self.pending > 0:
                    self.done_cv.wait()
        for task in tasks:
            if task.error is not None:
                raise task.error
        return [task.result for task in tasks]

    def shutdown(self, cancel_pending=True, timeout=5):
        self.set_thread_count(0)
        # Ensure the threads shut down.
        threads = self.threads
        expiration = time.time() + timeout
        with self.lock:
            while threads:
                if time.time() >= expiration:
                    self.logger.warning("%d thread(s) still running", len(threads))
                    break
                self.thread_exit_cv.wait(0.1)
            if cancel_pending:
                # Cancel remaining tasks.
                queue = self.queue
                if len(queue) > 0:
                    self.logger.warning("Canceling %d pending task(s)", len(queue))
                while queue:
                    task = queue.popleft()
                    task.cancel()
                    self.pending -= 1
                self.queue_cv.notify_all()
                self.done_cv.notify_all()
                return True
        return False


def run_tasks(tasks, threads=1):
    """Run ``tasks`` on ``threads`` workers (inline when ``threads`` <= 1).

    Items may be Task instances or ``(func, *args)`` tuples."""
    tasks = [t if isinstance(t, Task) else Task(*t) for t in tasks]
    dispatcher = ThreadedTaskDispatcher()
    if threads > 1:
        dispatcher.set_thread_count(threads)
    try:
        return dispatcher.run_all(tasks)
    finally:
        if threads > 1:
            dispatcher.shutdown()
