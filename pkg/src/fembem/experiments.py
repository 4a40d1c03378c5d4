"""Experiment drivers: weakly-singular equation, JN / symmetric / BMC
couplings on adaptive meshes, and corner-only refinement."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

import numpy as np
import scipy.linalg as sla

from . import adapt, coupling, precond, spectral
from .gmres import GmresConfig, gmres_pfree
from .kernels import DEFAULT_QUADRATURE, QuadratureConfig
from .mesh import (
    LSHAPE_ROTATION,
    LSHAPE_SIDE,
    MeshHierarchy,
    VolumeMesh,
    hierarchy_from_boundary,
    hierarchy_from_volume,
    induced_boundary_mesh,
    lshape_mesh,
    lshape_vertices,
)
from .operators import ConfigurationError, assemble_blocks, assemble_dlp, assemble_mass_trace, assemble_slp
from .problems import POLE, point_in_polygon, problem_transmission, problem_weaksing

CSV_COLUMNS = (
    "level", "nT_omega", "M", "h_max", "h_min", "cond2_est", "cond_mlas",
    "cond_hb", "cond_diag", "iters_stab", "iters_nostab", "relres",
)
EXPERIMENTS = ("weaksing", "jn", "sym_vs_jn", "bmc", "artificial")


class NumericalFailure(ArithmeticError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "jn"
    levels: int = 8
    theta: float = 0.5
    tol: Optional[float] = None          # default per experiment
    precond: str = "mlas"                # mlas | hb | diag | none
    coupling: str = "jn"                 # for the jn driver: jn | sym | bmc
    stabilized: bool = True
    max_dofs: int = 5000
    mesh: Optional[VolumeMesh] = None
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE
    spectra: bool = True                 # dense condition numbers
    keep: bool = False                   # keep per-level matrices in records

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        if self.levels < 0:
            raise ConfigurationError("levels must be >= 0")
        if not 0 < self.theta <= 1:
            raise ConfigurationError("theta must lie in (0, 1]")
        if self.tol is not None and not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.precond not in ("mlas", "hb", "diag", "none"):
            raise ConfigurationError(f"unknown preconditioner {self.precond!r}")
        if self.coupling not in ("jn", "sym", "bmc"):
            raise ConfigurationError(f"unknown coupling {self.coupling!r}")
        if self.max_dofs < 1:
            raise ConfigurationError("max_dofs must be positive")

    @property
    def tolerance(self) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-3 if self.experiment == "sym_vs_jn" else 1e-6


@dataclass
class ExperimentRecord:
    level: int
    nT_omega: Optional[int]
    M: int
    h_max: float
    h_min: float
    cond2_est: Optional[float] = None
    cond_mlas: Optional[float] = None
    cond_hb: Optional[float] = None
    cond_diag: Optional[float] = None
    iters_stab: Optional[int] = None
    iters_nostab: Optional[int] = None
    relres: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def row(self) -> list:
        out = []
        for c in CSV_COLUMNS:
            v = getattr(self, c)
            out.append("" if v is None else (repr(float(v)) if isinstance(v, float) else str(v)))
        return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    hierarchy: MeshHierarchy
    meta: dict


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def run_metadata(cfg: ExperimentConfig) -> dict:
    q = cfg.quadrature
    verts = lshape_vertices() if cfg.mesh is None else None
    return {
        "experiment": cfg.experiment,
        "levels": cfg.levels,
        "theta": cfg.theta,
        "tol": cfg.tolerance,
        "precond": cfg.precond,
        "coupling": cfg.coupling,
        "stabilized": cfg.stabilized,
        "max_dofs": cfg.max_dofs,
        "geometry": "external mesh" if verts is None else
        "L-shape side=%r rotation=%r vertices=%s" % (float(LSHAPE_SIDE), float(LSHAPE_ROTATION), (verts + 0.0).tolist()),
        "quadrature": f"order={q.order} graded_order={q.graded_order} grading={q.grading} far_ratio={q.far_ratio}",
        "seeds": "none (deterministic)",
    }


def _fem_handle(h, A_cal, kind):
    if kind == "none":
        return precond.identity(A_cal.shape[0])
    if kind == "diag":
        return precond.build_diag(A_cal)
    return precond.build_mlas_fem(h, A_cal, hb=(kind == "hb"))


def _slp_handle(h, A_V, kind, level_slp=None):
    if kind == "none":
        return precond.identity(A_V.shape[0])
    if kind == "diag":
        return precond.build_diag(A_V)
    return precond.build_mlas_slp(h, A_V, level_slp, hb=(kind == "hb"))


def _block_handle(h, pform, kind):
    return precond.compose_block(_fem_handle(h, pform.A_cal, kind), _slp_handle(h, pform.A_V, kind))


def _solve_gmres(system, P, tol, U0=None):
    rep = gmres_pfree(system.apply, P.apply_inverse, system.rhs, U0, GmresConfig(tol=tol))
    if not rep.converged:
        raise NumericalFailure(f"GMRES did not converge ({rep.reason}, relres={rep.relres:.3e})")
    return rep


def _h_stats(bmesh):
    L = bmesh.lengths
    return float(L.max()), float(L.min())


def _initial_mesh(cfg, needs_pole: bool = False):
    mesh = cfg.mesh if cfg.mesh is not None else lshape_mesh()
    if needs_pole and cfg.mesh is not None:
        b = induced_boundary_mesh(mesh)
        if not point_in_polygon(POLE, b.nodes[b.node_ids]):
            raise ConfigurationError("exterior solution pole lies outside the supplied mesh")
    return mesh


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------


def run_weaksing(cfg: ExperimentConfig, on_record: Optional[Callable] = None) -> ExperimentResult:
    problem = problem_weaksing()
    level_slp = []

    def step(h, level, _):
        _, bnd = h.finest
        A_V = assemble_slp(bnd, cfg.quadrature)
        level_slp.append(A_V)
        K = assemble_dlp(bnd, cfg.quadrature)
        Mb = assemble_mass_trace(bnd)
        G = coupling.weaksing_rhs(bnd, K, Mb, problem.g)
        phi = sla.solve(A_V, G, assume_a="pos")
        hmax, hmin = _h_stats(bnd)
        rec = ExperimentRecord(level, None, bnd.n_segments, hmax, hmin)
        alpha, beta = spectral.unpreconditioned_growth_bounds(bnd.n_segments, hmax, hmin)
        rec.extra.update(alpha=alpha, beta=beta)
        if cfg.spectra and bnd.n_segments <= cfg.max_dofs:
            ev = np.linalg.eigvalsh(A_V)
            rec.cond2_est = float(ev[-1] / ev[0])
            r_m = spectral.cond_precond_sym(precond.build_mlas_slp(h, A_V, level_slp), A_V)
            rec.cond_mlas = r_m.cond
            rec.cond_hb = spectral.cond_precond_sym(precond.build_mlas_slp(h, A_V, level_slp, hb=True), A_V).cond
            rec.cond_diag = spectral.cond_precond_sym(precond.build_diag(A_V), A_V).cond
            rec.extra.update(lam_slp=(r_m.lam_min, r_m.lam_max))
        P = _slp_handle(h, A_V, cfg.precond, level_slp)
        rep = gmres_pfree(lambda x: A_V @ x, P.apply_inverse, G, None, GmresConfig(tol=cfg.tolerance))
        if not rep.converged:
            raise NumericalFailure(f"GMRES did not converge ({rep.reason})")
        rec.iters_stab, rec.relres = rep.iterations, rep.relres
        rec.extra.update(history_stab=rep.history)
        ind = adapt.estimate_weaksing(bnd, phi, problem.g)
        rec.extra.update(estimator=float(np.sqrt(ind.total)))
        if cfg.keep:
            rec.extra.update(A_V=A_V, K=K, Mb=Mb, phi=phi)
        return rec, ((), adapt.mark_doerfler(ind.boundary, cfg.theta)), None

    h0 = hierarchy_from_boundary(induced_boundary_mesh(_initial_mesh(cfg)))
    h, records = adapt.adaptive_loop(h0, step, cfg.levels, on_record)
    return ExperimentResult(cfg, records, h, run_metadata(cfg))


def _coupled_level(h, problem, cfg, hyp):
    vol, bnd = h.finest
    blocks = assemble_blocks(vol, bnd, problem.material, cfg.quadrature, hyp=hyp)
    parts = coupling.rhs_parts(vol, bnd, problem, cfg.quadrature)
    return vol, bnd, blocks, parts


def run_coupled(cfg: ExperimentConfig, on_record: Optional[Callable] = None) -> ExperimentResult:
    """Drivers ``jn``, ``bmc`` and ``artificial``."""
    problem = problem_transmission()
    kind = "bmc" if cfg.experiment == "bmc" else cfg.coupling if cfg.experiment == "jn" else "jn"

    def step(h, level, _):
        vol, bnd, blocks, parts = _coupled_level(h, problem, cfg, hyp=(kind == "sym"))
        sys_s = coupling.build_system(kind, blocks, parts, True)
        sys_n = coupling.build_system(kind, blocks, parts, False)
        pform = coupling.build_pform(blocks, symmetric=(kind == "sym"))
        hmax, hmin = _h_stats(bnd)
        rec = ExperimentRecord(level, vol.n_triangles, bnd.n_segments, hmax, hmin)
        rec.extra.update(N=sys_s.N, compatibility=parts.compat)
        if cfg.spectra and sys_s.N + sys_s.M <= cfg.max_dofs:
            rec.cond2_est = spectral.cond2_estimate(sys_s.dense())
            B = pform.dense()
            r_m = spectral.cond_precond_sym(_block_handle(h, pform, "mlas"), B)
            r_h = spectral.cond_precond_sym(_block_handle(h, pform, "hb"), B)
            r_d = spectral.cond_precond_sym(precond.build_diag(B), B)
            rec.cond_mlas, rec.cond_hb, rec.cond_diag = r_m.cond, r_h.cond, r_d.cond
            r_f = spectral.cond_precond_sym(_fem_handle(h, pform.A_cal, "mlas"), pform.A_cal)
            r_v = spectral.cond_precond_sym(_slp_handle(h, pform.A_V, "mlas"), pform.A_V)
            rec.extra.update(lam_mlas=(r_m.lam_min, r_m.lam_max), lam_hb=(r_h.lam_min, r_h.lam_max),
                             lam_fem=(r_f.lam_min, r_f.lam_max), lam_slp=(r_v.lam_min, r_v.lam_max))
        P = _block_handle(h, pform, cfg.precond)
        rep_s = _solve_gmres(sys_s, P, cfg.tolerance)
        rep_n = _solve_gmres(sys_n, P, cfg.tolerance)
        rec.iters_stab, rec.iters_nostab = rep_s.iterations, rep_n.iterations
        rec.relres = rep_s.relres if cfg.stabilized else rep_n.relres
        rec.extra.update(history_stab=rep_s.history, history_nostab=rep_n.history)
        if cfg.keep:
            rec.extra.update(system=sys_s, system_nostab=sys_n, pform=pform, U=rep_s.x)
        if cfg.experiment == "artificial":
            return rec, adapt.mark_corner(vol, bnd), None
        U = sys_s.solve_dense()  # steer with the exact Galerkin solution
        ind = adapt.estimate_coupling(vol, bnd, U[: sys_s.N], U[sys_s.N:], problem, kind)
        rec.extra.update(estimator=float(np.sqrt(ind.total)))
        return rec, adapt.mark_doerfler_field(ind, cfg.theta), None

    h0 = hierarchy_from_volume(_initial_mesh(cfg, needs_pole=True))
    h, records = adapt.adaptive_loop(h0, step, cfg.levels, on_record)
    return ExperimentResult(cfg, records, h, run_metadata(cfg))


def run_sym_vs_jn(cfg: ExperimentConfig, on_record: Optional[Callable] = None) -> ExperimentResult:
    """Iteration counts of the symmetric coupling (``iters_stab`` column) and
    the JN coupling (``iters_nostab`` column) with prolongated initial
    guesses; adaptivity is steered by the symmetric solution."""
    problem = problem_transmission()

    def step(h, level, prev):
        vol, bnd, blocks, parts = _coupled_level(h, problem, cfg, hyp=True)
        hmax, hmin = _h_stats(bnd)
        rec = ExperimentRecord(level, vol.n_triangles, bnd.n_segments, hmax, hmin)
        sols = {}
        for kind in ("sym", "jn"):
            system = coupling.build_system(kind, blocks, parts, cfg.stabilized)
            P = _block_handle(h, coupling.build_pform(blocks, symmetric=(kind == "sym")), cfg.precond)
            U0 = None
            if prev is not None:
                n0 = h.volumes[-2].n_nodes
                u, phi = adapt.prolongate(h, prev[kind][:n0], prev[kind][n0:])
                U0 = np.concatenate([u, phi])
            rep = _solve_gmres(system, P, cfg.tolerance, U0)
            sols[kind] = rep.x
            rec.extra[f"iters_{kind}"] = rep.iterations
            rec.extra[f"relres_{kind}"] = rep.relres
            rec.extra[f"history_{kind}"] = rep.history
            if kind == "sym":
                steer = system.solve_dense()
        rec.iters_stab, rec.iters_nostab = rec.extra["iters_sym"], rec.extra["iters_jn"]
        rec.relres = rec.extra["relres_sym"]
        N = vol.n_nodes
        ind = adapt.estimate_coupling(vol, bnd, steer[:N], steer[N:], problem, "sym")
        rec.extra.update(estimator=float(np.sqrt(ind.total)))
        return rec, adapt.mark_doerfler_field(ind, cfg.theta), sols

    h0 = hierarchy_from_volume(_initial_mesh(cfg, needs_pole=True))
    h, records = adapt.adaptive_loop(h0, step, cfg.levels, on_record)
    return ExperimentResult(cfg, records, h, run_metadata(cfg))


def run_experiment(cfg: ExperimentConfig, on_record: Optional[Callable] = None) -> ExperimentResult:
    if cfg.experiment == "weaksing":
        return run_weaksing(cfg, on_record)
    if cfg.experiment == "sym_vs_jn":
        return run_sym_vs_jn(cfg, on_record)
    return run_coupled(cfg, on_record)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


class CsvSink:
    """Writes metadata comments, the fixed header and flushes each row."""

    def __init__(self, stream: TextIO, meta: dict):
        self.stream = stream
        for k, v in meta.items():
            stream.write(f"# {k}: {v}\n")
        self.writer = csv.writer(stream, lineterminator="\n")
        self.writer.writerow(CSV_COLUMNS)
        stream.flush()

    def __call__(self, rec: ExperimentRecord) -> None:
        self.writer.writerow(rec.row())
        self.stream.flush()


def read_csv(path_or_stream) -> list[dict]:
    fh = open(path_or_stream) if isinstance(path_or_stream, str) else path_or_stream
    try:
        lines = [ln for ln in fh if not ln.startswith("#")]
    finally:
        if isinstance(path_or_stream, str):
            fh.close()
    return list(csv.DictReader(io.StringIO("".join(lines))))
