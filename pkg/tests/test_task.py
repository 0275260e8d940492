import threading
import unittest


class TestThreadedTaskDispatcher(unittest.TestCase):
    def _makeOne(self):
        from lepspace.task import ThreadedTaskDispatcher

        return ThreadedTaskDispatcher()

    def test_handler_thread_task_raises(self):
        inst = self._makeOne()
        inst.threads.add(0)
        inst.logger = DummyLogger()

        class BadDummyTask(DummyTask):
            def service(self):
                super(BadDummyTask, self).service()
                inst.stop_count += 1
                raise Exception

        task = BadDummyTask()
        inst.queue.append(task)
        inst.pending = 1
        inst.active_count += 1
        inst.handler_thread(0)
        self.assertEqual(inst.stop_count, 0)
        self.assertEqual(inst.active_count, 0)
        self.assertEqual(inst.threads, set())
        self.assertEqual(inst.pending, 0)
        self.assertEqual(len(inst.logger.logged), 1)

    def test_set_thread_count_increase(self):
        inst = self._makeOne()
        L = []
        inst.start_new_thread = lambda *x: L.append(x)
        inst.set_thread_count(1)
        self.assertEqual(L, [(inst.handler_thread, 0)])

    def test_set_thread_count_increase_with_existing(self):
        inst = self._makeOne()
        L = []
        inst.threads = {0}
        inst.start_new_thread = lambda *x: L.append(x)
        inst.set_thread_count(2)
        self.assertEqual(L, [(inst.handler_thread, 1)])

    def test_set_thread_count_decrease(self):
        inst = self._makeOne()
        inst.threads = {0, 1}
        inst.set_thread_count(1)
        self.assertEqual(inst.stop_count, 1)

    def test_set_thread_count_same(self):
        inst = self._makeOne()
        L = []
        inst.start_new_thread = lambda *x: L.append(x)
        inst.threads = {0}
        inst.set_thread_count(1)
        self.assertEqual(L, [])

    def test_add_task(self):
        task = DummyTask()
        inst = self._makeOne()
        inst.add_task(task)
        self.assertEqual(len(inst.queue), 1)
        self.assertEqual(inst.pending, 1)

    def test_run_all_inline(self):
        from lepspace.task import Task

        inst = self._makeOne()
        tasks = [Task(pow, 2, n) for n in range(5)]
        self.assertEqual(inst.run_all(tasks), [1, 2, 4, 8, 16])
        self.assertTrue(all(t.complete for t in tasks))

    def test_run_all_reraises_first_error(self):
        from lepspace.task import Task

        inst = self._makeOne()
        seen = []

        def work(n):
            seen.append(n)
            if n:
                raise ValueError(n)
            return n

        tasks = [Task(work, n) for n in range(3)]
        with self.assertRaises(ValueError) as cm:
            inst.run_all(tasks)
        self.assertEqual(cm.exception.args, (1,))
        self.assertEqual(seen, [0, 1, 2])

    def test_run_all_with_threads(self):
        from lepspace.task import Task

        inst = self._makeOne()
        inst.set_thread_count(3)
        try:
            names = inst.run_all(
                [Task(lambda: threading.current_thread().name) for _ in range(6)]
            )
        finally:
            inst.shutdown()
        self.assertEqual(len(names), 6)
        self.assertTrue(all(n.startswith("lepspace-") for n in names))

    def test_shutdown_one_thread(self):
        inst = self._makeOne()
        inst.threads.add(0)
        inst.logger = DummyLogger()
        task = DummyTask()
        inst.queue.append(task)
        inst.pending = 1
        self.assertEqual(inst.shutdown(timeout=0.01), True)
        self.assertEqual(
            inst.logger.logged,
            ["1 thread(s) still running", "Canceling 1 pending task(s)"],
        )
        self.assertEqual(task.cancelled, True)
        self.assertEqual(inst.pending, 0)

    def test_shutdown_no_threads(self):
        inst = self._makeOne()
        self.assertEqual(inst.shutdown(timeout=0.01), True)

    def test_shutdown_no_cancel_pending(self):
        inst = self._makeOne()
        self.assertEqual(inst.shutdown(cancel_pending=False, timeout=0.01), False)


class TestTask(unittest.TestCase):
    def _makeOne(self, func, *args):
        from lepspace.task import Task

        return Task(func, *args)

    def test_service_keeps_result(self):
        inst = self._makeOne(max, 3, 7)
        inst.service()
        self.assertEqual(inst.result, 7)
        self.assertEqual(inst.error, None)
        self.assertTrue(inst.complete)

    def test_service_keeps_error(self):
        inst = self._makeOne(int, "x")
        inst.service()
        self.assertTrue(isinstance(inst.error, ValueError))
        self.assertTrue(inst.complete)

    def test_cancel(self):
        inst = self._makeOne(max, 1, 2)
        inst.cancel()
        self.assertTrue(inst.cancelled)
        self.assertTrue(inst.complete)
        self.assertEqual(inst.result, None)

    def test_repr(self):
        inst = self._makeOne(max, 1, 2)
        self.assertEqual(repr(inst), "<Task max(1, 2)>")


class Test_run_tasks(unittest.TestCase):
    def _callFUT(self, tasks, threads=1):
        from lepspace.task import run_tasks

        return run_tasks(tasks, threads=threads)

    def test_tuples_inline(self):
        result = self._callFUT([(abs, -1), (abs, -2)])
        self.assertEqual(result, [1, 2])

    def test_order_kept_with_threads(self):
        result = self._callFUT([(pow, n, 2) for n in range(20)], threads=4)
        self.assertEqual(result, [n * n for n in range(20)])

    def test_empty(self):
        self.assertEqual(self._callFUT([], threads=2), [])


class DummyTask(object):
    serviced = False
    cancelled = False
    error = None
    result = None

    def service(self):
        self.serviced = True

    def cancel(self):
        self.cancelled = True


class DummyLogger(object):
    def __init__(self):
        self.logged = []

    def warning(self, msg, *args):
        self.logged.append(msg % args)

    def exception(self, msg, *args):
        self.logged.append(msg % args)
