from lepspace.dirichlet import DirichletProblem, solve_dirichlet
from lepspace.hamiltonian import HamiltonianFamily
from lepspace.metric import MeshParams
from lepspace.utilities import __version__  # noqa: F401


def solve(complex, f=1.0, g=0.0, h=1.0 / 32, ring=2, steiner=1, **kw):
    """Eikonal Dirichlet solution ``|Du|^2 = f`` with ``u = g`` on the
    excluded boundary of ``complex``.

    ``f`` is a number, a weight field or a per-branch mapping; further
    keywords go to DirichletProblem."""
    if isinstance(f, (int, float)):
        from lepspace.hamiltonian import ConstantField

        f = ConstantField(f)
    H = HamiltonianFamily.eikonal(complex, f)
    params = MeshParams(h=h, steiner_per_edge=steiner, connectivity_order=ring)
    return solve_dirichlet(DirichletProblem(complex, H, g=g, params=params, **kw))
