"""Synthetic thin-film plant used as the data-generating system.

The film thickness h(x, y) lives on a uniform grid. Each time step the inlet
flows pass through a second-order supply filter, set the inlet column to
gamma(y) / U0, advect one cell downstream (CFL = 1, an exact shift) and level
laterally by explicit diffusion with zero-flux side walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Geometry, OperatingPoint, SignalLog, as_vector, default_geometry
from .dynamics import ScalarSurrogate, discretize_zoh
from .kernelmap import CrossGain
from .numerics import ConvergenceError

DEFAULT_ELL = 0.014
DEFAULT_SUPPLY = (1.87e4, 1.97e2)


def default_diffusivity(g: Geometry, ell: float = DEFAULT_ELL) -> float:
    """D_y giving a lateral spread ``ell`` over the transit time: ell^2 / (2 L)."""
    return ell * ell / (2.0 * g.transport_delay)


@dataclass(frozen=True)
class TruthPlantConfig:
    geometry: Geometry = field(default_factory=default_geometry)
    lateral_diffusivity: float | None = None  # None -> default_diffusivity(geometry)
    supply_c0: float = DEFAULT_SUPPLY[0]
    supply_c1: float = DEFAULT_SUPPLY[1]
    grid_ny: int = 100
    sim_dt: float = 1e-3
    domain_margin: float = 0.10
    noise_std: float = 5e-7
    rng_seed: int = 0
    q0: np.ndarray | float = 1e-6
    bypass_supply: bool = False

    def __post_init__(self):
        g = self.geometry
        if self.lateral_diffusivity is None:
            object.__setattr__(self, "lateral_diffusivity", default_diffusivity(g))
        q0 = as_vector(self.q0, g.n_inlets, "q0").copy()
        if np.any(q0 <= 0):
            raise ValueError("operating flows must be positive")
        q0.setflags(write=False)
        object.__setattr__(self, "q0", q0)
        if self.lateral_diffusivity < 0:
            raise ValueError("lateral diffusivity must be non-negative")
        if not (self.sim_dt > 0 and self.grid_ny >= 1 and self.domain_margin >= 0):
            raise ValueError("sim_dt, grid_ny and domain_margin must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if not (self.supply_c0 > 0 and self.supply_c1 > 0):
            raise ValueError("supply filter coefficients must be positive")
        if self.diffusion_number > 0.5:
            raise ValueError(
                f"explicit diffusion unstable: D_y dt / dy^2 = {self.diffusion_number:.3f} > 0.5"
            )
        if g.sensor_station + g.sensor_radius > self.grid_nx * self.dx:
            raise ValueError("sensor footprint extends past the end of the grid")

    # grid_nx follows from the CFL = 1 condition rather than being free
    @property
    def dx(self) -> float:
        return self.geometry.web_speed * self.sim_dt

    @property
    def grid_nx(self) -> int:
        length = self.geometry.sensor_station * (1.0 + self.domain_margin)
        return int(math.ceil(length / self.dx - 1e-9))

    @property
    def dy(self) -> float:
        return self.geometry.coating_width / self.grid_ny

    @property
    def diffusion_number(self) -> float:
        return self.lateral_diffusivity * self.sim_dt / self.dy**2

    @property
    def operating_flows(self) -> np.ndarray:
        return self.q0

    def supply_surrogate(self) -> ScalarSurrogate:
        return ScalarSurrogate.normalized(0.0, self.supply_c0, self.supply_c1)


@dataclass
class TruthPlantState:
    h_field: np.ndarray  # (grid_nx, grid_ny) [m]
    supply_states: np.ndarray  # (2, n)
    sim_time: float = 0.0

    def copy(self) -> "TruthPlantState":
        return TruthPlantState(self.h_field.copy(), self.supply_states.copy(), self.sim_time)

    def volume(self, cfg: TruthPlantConfig) -> float:
        return float(cfg.dx * cfg.dy * np.sum(self.h_field))


def inlet_flux_profile(q, g: Geometry) -> Callable[[np.ndarray], np.ndarray]:
    """Per-width inlet flux gamma(y) [m^2/s]: q_i / w_s on stripe i, zero elsewhere."""
    q = as_vector(q, g.n_inlets, "q").copy()
    bounds = g.stripe_bounds()

    def gamma(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for (lo, hi), qi in zip(bounds, q):
            out = np.where((y >= lo) & (y < hi), qi / g.stripe_width, out)
        return out

    return gamma


def _inlet_matrix(cfg: TruthPlantConfig) -> np.ndarray:
    """(ny, n) map from flows to cell-averaged inlet thickness gamma / U0.

    Cell averages use exact stripe/cell overlaps, so the inflow volume per
    step equals sum(q) * sim_dt for any grid resolution.
    """
    g = cfg.geometry
    edges = np.arange(cfg.grid_ny + 1) * cfg.dy
    bounds = g.stripe_bounds()
    lo = np.maximum(edges[:-1, None], bounds[None, :, 0])
    hi = np.minimum(edges[1:, None], bounds[None, :, 1])
    overlap = np.clip(hi - lo, 0.0, None) / cfg.dy
    return overlap / (g.stripe_width * g.web_speed)


def _sensor_cells(cfg: TruthPlantConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    g = cfg.geometry
    xc = (np.arange(cfg.grid_nx) + 0.5) * cfg.dx
    yc = (np.arange(cfg.grid_ny) + 0.5) * cfg.dy
    cells = []
    for yj in g.stripe_centers:
        r2 = (xc[:, None] - g.sensor_station) ** 2 + (yc[None, :] - yj) ** 2
        ix, iy = np.nonzero(r2 <= g.sensor_radius**2 * (1 + 1e-12))
        if ix.size == 0:
            raise ValueError(f"no grid cell centre lies inside the sensor disc at y={yj}")
        cells.append((ix, iy))
    return cells


class _Stepper:
    """Precomputed operators for repeated in-place stepping of one config."""

    def __init__(self, cfg: TruthPlantConfig):
        self.cfg = cfg
        self.inlet = _inlet_matrix(cfg)
        self.sensors = _sensor_cells(cfg)
        self.r = cfg.diffusion_number
        f = discretize_zoh(cfg.supply_surrogate(), cfg.sim_dt)
        self.Phi, self.Gamma, self.C = f.Phi, f.Gamma, f.C
        self._ss = np.linalg.solve(np.eye(2) - self.Phi, self.Gamma)
        # step-averaged output: mean over the step of C x(t) for held input,
        # needed because the inlet cell stores a cell average, not a point value
        c0, c1, T = cfg.supply_c0, cfg.supply_c1, cfg.sim_dt
        a_inv = np.array([[-c1, -1.0], [c0, 0.0]]) / c0
        m_avg = a_inv @ (self.Phi - np.eye(2)) / T
        self.Cx = self.C @ m_avg
        self.Cu = float(self.C @ a_inv @ (m_avg - np.eye(2)) @ np.array([0.0, 1.0]))

    def steady_supply(self, q: np.ndarray) -> np.ndarray:
        return np.outer(self._ss, q)

    def step(self, state: TruthPlantState, q: np.ndarray) -> float:
        """Advance ``state`` in place by one sim_dt; returns the outflow volume.

        The inflow volume of the step is sim_dt times the sum of the
        step-averaged supplied flows.
        """
        cfg = self.cfg
        if cfg.bypass_supply:
            qf = q
        else:
            x = state.supply_states
            qf = self.Cx @ x + self.Cu * q
            state.supply_states = self.Phi @ x + np.outer(self.Gamma, q)
        h = state.h_field
        out = cfg.dx * cfg.dy * float(np.sum(h[-1]))
        h[1:] = h[:-1].copy()
        h[0] = self.inlet @ qf
        if self.r > 0 and h.shape[1] > 1:
            flux = self.r * (h[:, 1:] - h[:, :-1])
            h[:, :-1] += flux
            h[:, 1:] -= flux
        state.sim_time += cfg.sim_dt
        return out

    def measure(self, state: TruthPlantState) -> np.ndarray:
        return np.array([state.h_field[ix, iy].mean() for ix, iy in self.sensors])

    def steady_state(self, q: np.ndarray) -> TruthPlantState:
        cfg = self.cfg
        state = TruthPlantState(
            np.zeros((cfg.grid_nx, cfg.grid_ny)), self.steady_supply(q), 0.0
        )
        for _ in range(cfg.grid_nx):
            self.step(state, q)
        before = state.h_field.copy()
        self.step(state, q)
        scale = max(float(np.max(np.abs(before))), 1e-300)
        if np.max(np.abs(state.h_field - before)) > 1e-9 * scale:
            raise ConvergenceError("truth plant did not reach steady state within the time budget")
        state.sim_time = 0.0
        return state


def initial_state(cfg: TruthPlantConfig, q=None) -> TruthPlantState:
    """Steady state for constant flows ``q`` (default: the configured q0)."""
    q = cfg.q0 if q is None else as_vector(q, cfg.geometry.n_inlets, "q")
    return _Stepper(cfg).steady_state(np.asarray(q, dtype=float))


def step_truth(state: TruthPlantState, q, cfg: TruthPlantConfig) -> TruthPlantState:
    """One sim_dt update; returns a new state and leaves ``state`` untouched."""
    q = as_vector(q, cfg.geometry.n_inlets, "q")
    new = state.copy()
    if new.h_field.shape != (cfg.grid_nx, cfg.grid_ny):
        raise ValueError(f"state grid {new.h_field.shape} does not match config")
    _Stepper(cfg).step(new, q)
    return new


def measure(state: TruthPlantState, cfg: TruthPlantConfig, noise_rng=None) -> np.ndarray:
    """Disc-averaged thickness at every sensor, plus noise when ``noise_rng`` is given."""
    h = _Stepper(cfg).measure(state)
    if noise_rng is not None and cfg.noise_std > 0:
        h = h + noise_rng.normal(0.0, cfg.noise_std, size=h.shape)
    return h


def run_experiment(cfg: TruthPlantConfig, q_log: SignalLog, Ts: float) -> SignalLog:
    """Drive the plant with the inputs of ``q_log`` and sample thickness every Ts.

    The plant starts at its steady state for q0. Sample k is measured before
    q(k) is applied and q(k) is then held for Ts.
    """
    if q_log.frame != "absolute":
        raise ValueError("run_experiment expects absolute-frame flows")
    if q_log.n_channels != cfg.geometry.n_inlets:
        raise ValueError(f"log has {q_log.n_channels} channels, geometry has {cfg.geometry.n_inlets}")
    sub = Ts / cfg.sim_dt
    n_sub = int(round(sub))
    if n_sub < 1 or abs(sub - n_sub) > 1e-9 * sub:
        raise ValueError(f"Ts={Ts} is not an integer multiple of sim_dt={cfg.sim_dt}")
    stepper = _Stepper(cfg)
    state = stepper.steady_state(cfg.q0)
    rng = np.random.default_rng(cfg.rng_seed)
    out = np.empty_like(q_log.inputs)
    for k in range(q_log.n_samples):
        h = stepper.measure(state)
        if cfg.noise_std > 0:
            h = h + rng.normal(0.0, cfg.noise_std, size=h.shape)
        out[:, k] = h
        qk = q_log.inputs[:, k]
        for _ in range(n_sub):
            stepper.step(state, qk)
    return SignalLog(Ts, q_log.inputs, out, frame="absolute", t0=q_log.t0)


def steady_operating_point(cfg: TruthPlantConfig) -> OperatingPoint:
    """(q0, h0) with h0 the noise-free steady sensor reading."""
    stepper = _Stepper(cfg)
    return OperatingPoint(cfg.q0, stepper.measure(stepper.steady_state(cfg.q0)))


def dc_sensitivity(cfg: TruthPlantConfig, eps=None) -> CrossGain:
    """Finite-difference steady-state Jacobian dh_j / dq_i (default eps = 1% of q0)."""
    n = cfg.geometry.n_inlets
    eps = 0.01 * cfg.q0 if eps is None else as_vector(eps, n, "eps")
    if np.any(eps == 0):
        raise ValueError("eps must be non-zero")
    stepper = _Stepper(cfg)
    base = stepper.measure(stepper.steady_state(cfg.q0))
    H = np.empty((n, n))
    for i in range(n):
        q = cfg.q0.copy()
        q[i] += eps[i]
        H[:, i] = (stepper.measure(stepper.steady_state(q)) - base) / eps[i]
    return CrossGain(H, provenance="finite-difference")
