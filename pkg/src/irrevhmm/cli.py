"""Command-line experiment runner.

Configuration is a plain-text file of ``key = value`` lines (``#`` starts a
comment). ``row = <scheme> <eps> <tau> <delta>`` may repeat and lists the
parameter sets of a table or comparison; ``preset = <name>`` loads one of
the built-in experiments first. Precedence: preset < file < ``--set`` <
dedicated flags. Every output begins with ``#`` lines recording the
resolved configuration; the thread count and output path are left out so
that output bytes depend only on the experiment and the seed.
"""

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .graph.coefficients import edge_coefficients, gluing_probabilities
from .graph.critical import find_critical_points
from .graph.io import coefficients_csv, fmt, gluing_text, write_csv
from .graph.reeb import build_reeb_graph
from .graph.transitions import TransitionCounter
from .graph_limit import build_graph_limit, compare_projected_law, simulate_y
from .integrators import IntegratorParams, simulate
from .potentials import POTENTIALS, j_drift
from .quadrature import gibbs_report
from .sampler import OBSERVABLES, SamplingConfig, replicate_ensemble
from .validation import resolve_potential

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class Row:
    scheme: str
    eps: float
    tau: float
    delta: float

    def __str__(self):
        tau = "-" if self.scheme == "em" else repr(self.tau)
        return f"{self.scheme} {self.eps!r} {tau} {self.delta!r}"


@dataclass
class ExperimentConfig:
    potential: str = "double_well"
    beta: float = 0.1
    kappa: float = 0.0
    observable: str = "x_plus_y2"
    scheme: str = "hmm"
    eps: float = 1e-2
    tau: float = 5e-4
    delta: float = 5e-3
    T_total: float = 2000.0
    T_burn: float = 20.0
    n_batches: int = 20
    n_replicates: int = 200
    avar_normalization: str = "batch"
    true_average: float = float("nan")
    seed: int = 0
    z0: tuple = (0.0, 0.0)
    # transitions
    chains: int = 1
    zeta_hyst: float = 5e-3
    # graph / graph limit
    n_energies: int = 41
    zeta_res: float = 1e-3
    t: float = 1.0
    n_samples: int = 10000
    dt_edge: float = 1e-3
    dt_vertex: float = 1e-4
    rows: list = field(default_factory=list)
    # not part of the provenance header
    out: str = ""
    threads: int = 1

    def resolved_rows(self):
        return list(self.rows) or [Row(self.scheme, self.eps, self.tau, self.delta)]

    def params(self, row):
        # Euler-Maruyama ignores tau; any admissible value keeps IntegratorParams happy
        tau = row.tau if row.scheme == "hmm" else row.delta
        return IntegratorParams(eps=row.eps, tau=tau, delta=row.delta, beta=self.beta, kappa=self.kappa,
                                seed=self.seed)

    def sampling(self):
        return SamplingConfig(T_total=self.T_total, T_burn=self.T_burn, n_batches=self.n_batches,
                              n_replicates=self.n_replicates, observable=self.observable,
                              avar_normalization=self.avar_normalization)

    def validate(self):
        if self.potential not in POTENTIALS:
            raise ConfigError(f"unknown potential {self.potential!r}; choose from {sorted(POTENTIALS)}")
        if self.observable not in OBSERVABLES:
            raise ConfigError(f"unknown observable {self.observable!r}; choose from {sorted(OBSERVABLES)}")
        if len(self.z0) != 2:
            raise ConfigError("z0 needs two coordinates")
        for name in ("n_replicates", "chains", "n_samples", "threads", "n_energies"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        for name in ("t", "dt_edge", "dt_vertex", "zeta_res"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.zeta_hyst < 0:
            raise ConfigError("zeta_hyst must be nonnegative")
        try:
            self.sampling()
            for row in self.resolved_rows():
                if row.scheme not in ("em", "hmm"):
                    raise ConfigError(f"unknown scheme {row.scheme!r} (em or hmm)")
                self.params(row)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def provenance(self, command):
        lines = [f"irrevhmm {__version__} {command}"]
        for f in dataclasses.fields(self):
            if f.name in ("out", "threads", "rows"):
                continue
            value = getattr(self, f.name)
            if f.name == "z0":
                value = " ".join(repr(float(c)) for c in value)
            lines.append(f"{f.name} = {value}")
        lines.extend(f"row = {row}" for row in self.resolved_rows())
        return lines


def _rows(spec):
    return [Row(s, float(e), float(t) if t != "-" else float("nan"), float(d))
            for s, e, t, d in (line.split() for line in spec)]


_DW_TABLE_ROWS = ["em 5 - 5e-3", "em 5e-1 - 5e-3", "em 1e-1 - 5e-3",
                  "hmm 1e-2 5e-4 5e-3", "hmm 1e-3 5e-5 5e-3", "hmm 1e-4 5e-6 5e-3"]

PRESETS = {
    "table1": dict(potential="double_well", beta=0.1, observable="x_plus_y2", true_average=0.05,
                   rows=_rows(_DW_TABLE_ROWS)),
    "table2": dict(potential="double_well", beta=0.1, observable="x_plus_y2", true_average=0.05,
                   rows=_rows(["em 5e-2 - 1e-3",
                               "hmm 1e-3 2e-5 1e-3", "hmm 1e-4 2e-6 1e-3", "hmm 1e-5 2e-7 1e-3",
                               "hmm 1e-4 1e-6 1e-3", "hmm 1e-5 1e-7 1e-3"])),
    "table3": dict(potential="rbs3", beta=0.2, observable="shifted_square", rows=_rows(_DW_TABLE_ROWS)),
    "transitions_symmetric": dict(potential="double_well", beta=0.1, scheme="hmm", eps=1e-5, tau=5e-7,
                                  delta=5e-3, T_total=2000.0, T_burn=20.0, chains=1, zeta_hyst=5e-3),
    "transitions_tilted": dict(potential="tilted_double_well", beta=0.1, scheme="hmm", eps=1e-5, tau=5e-7,
                               delta=5e-3, T_total=2000.0, T_burn=20.0, chains=1, zeta_hyst=5e-3),
    "compare_double_well": dict(potential="double_well", beta=0.1, z0=(0.0, 0.6), t=1.0, n_samples=10000,
                                rows=_rows(["hmm 1e-4 3e-7 1e-4", "hmm 5e-1 3e-7 1e-4"])),
}
for _name in ("table1", "table2", "table3"):
    PRESETS[_name] = dict(PRESETS[_name], n_replicates=200, T_total=2000.0, T_burn=20.0)
    PRESETS[_name + "_full"] = dict(PRESETS[_name], n_replicates=2000)


def _coerce(name, text):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if name not in fields or name == "rows":
        raise ConfigError(f"unknown configuration key {name!r}")
    default = getattr(ExperimentConfig(), name)
    try:
        if name == "z0":
            return tuple(float(c) for c in text.replace(",", " ").split())
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_config_text(text):
    """``(preset, settings, rows)`` from the contents of a configuration file."""
    preset, settings, rows = None, {}, []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            preset = value
        elif key == "row":
            parts = value.split()
            if len(parts) != 4:
                raise ConfigError(f"line {n}: row needs 'scheme eps tau delta'")
            try:
                rows.extend(_rows([value]))
            except ValueError:
                raise ConfigError(f"line {n}: bad row {value!r}") from None
        else:
            settings[key] = _coerce(key, value)
    return preset, settings, rows


def load_config(path=None, preset=None, overrides=(), seed=None, out=None, replicates=None, threads=None):
    """Resolve an :class:`ExperimentConfig` from a preset, a file and command-line overrides."""
    settings, rows = {}, []
    file_preset = None
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        file_preset, file_settings, rows = parse_config_text(text)
        settings.update(file_settings)
    preset = preset or file_preset
    base = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = dict(PRESETS[preset])
    base.update(settings)
    if rows:
        base["rows"] = rows
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        base[key] = _coerce(key, value)
    for key, value in (("seed", seed), ("out", out), ("n_replicates", replicates), ("threads", threads)):
        if value is not None:
            base[key] = value
    try:
        cfg = ExperimentConfig(**base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# --------------------------------------------------------------------------
# sub-commands; each returns the text to emit

TABLE_HEADER = ["scheme", "eps", "tau", "delta", "mean_err", "std_err", "mean_avar", "std_avar",
                "divergence_fraction", "n_replicates"]


def _true_average(cfg, potential):
    if np.isfinite(cfg.true_average):
        return cfg.true_average
    return gibbs_report(potential, cfg.beta, cfg.observable).value


def run_table(cfg):
    potential = resolve_potential(cfg.potential)
    drift = j_drift(potential)
    sampling = cfg.sampling()
    truth = _true_average(cfg, potential) if cfg.n_replicates else float("nan")
    comments = cfg.provenance("table") + [f"true_average = {fmt(truth)}"]
    rows = []
    for row in cfg.resolved_rows() if cfg.n_replicates else []:
        s = replicate_ensemble(row.scheme, cfg.params(row), sampling, potential, drift, truth,
                               z0=np.asarray(cfg.z0), n_jobs=cfg.threads)
        tau = fmt(row.tau) if row.scheme == "hmm" else ""
        rows.append([row.scheme, row.eps, tau, row.delta, s.mean_err, s.std_err, s.mean_avar, s.std_avar,
                     s.divergence_fraction, s.n_replicates])
        logger.info("row %s done", row)
    return write_csv(rows, TABLE_HEADER, comments)


def _transition_chunk(args):
    cfg, ids = args
    potential = resolve_potential(cfg.potential)
    graph = build_reeb_graph(potential, zeta_res=cfg.zeta_res)
    vertex = graph.saddles()[0]
    counter = TransitionCounter(graph, vertex, zeta_hyst=cfg.zeta_hyst, t_burn=cfg.T_burn)
    row = cfg.resolved_rows()[0]
    z = np.broadcast_to(np.asarray(cfg.z0, dtype=float), (len(ids), 2)).copy()
    simulate(z, row.scheme, cfg.params(row), potential, j_drift(potential), cfg.T_total, observer=counter,
             replicate_ids=ids)
    res = counter.result()
    return res.counts, res.other


def _fan_out(fn, cfg, n):
    chunks = [c for c in np.array_split(np.arange(n), max(1, min(cfg.threads, n))) if c.size]
    tasks = [(cfg, c) for c in chunks]
    if len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=len(tasks)) as pool:
        return list(pool.map(fn, tasks))


def run_transitions(cfg):
    """Descents through the lowest saddle energy, by lower edge, summed over ``chains`` trajectories."""
    potential = resolve_potential(cfg.potential)
    graph = build_reeb_graph(potential, zeta_res=cfg.zeta_res)
    saddles = graph.saddles()
    if not saddles:
        raise ConfigError(f"potential {cfg.potential} has no saddle to count transitions at")
    vertex = saddles[0]
    order = graph.lower_edges_by_x(vertex)
    edges = tuple(graph.vertices[vertex].edges_below)
    counts = np.zeros(len(edges), dtype=np.int64)
    other = 0
    if cfg.chains and cfg.T_total > cfg.T_burn:
        for c, o in _fan_out(_transition_chunk, cfg, cfg.chains):
            counts += c.sum(axis=0)
            other += int(o.sum())
    total = int(counts.sum())
    rows = []
    for rank, i in enumerate(order):
        side = "left" if rank == 0 else ("right" if rank == len(order) - 1 else "middle")
        n_i = int(counts[edges.index(i)])
        p = n_i / total if total else float("nan")
        se = np.sqrt(p * (1 - p) / total) if total else float("nan")
        rows.append([f"I{i}", side, n_i, p, se])
    comments = cfg.provenance("transitions") + [f"vertex = O{vertex} U = {fmt(graph.vertices[vertex].energy)}",
                                                f"total = {total}", f"unattributed = {other}"]
    return write_csv(rows, ["edge", "side", "count", "fraction", "std_error"], comments)


def run_graph_analysis(cfg):
    potential = resolve_potential(cfg.potential)
    crit = find_critical_points(potential)
    graph = build_reeb_graph(potential, crit, zeta_res=cfg.zeta_res)
    drift = j_drift(potential)
    tables = [edge_coefficients(potential, graph, e.index, cfg.beta, n_energies=cfg.n_energies,
                                zeta_res=cfg.zeta_res, drift=drift, n_jobs=cfg.threads) for e in graph.edges]
    comments = cfg.provenance("graph") + graph.describe().splitlines()
    for j in graph.saddles():
        w = gluing_probabilities(potential, graph, j, cfg.beta, drift=drift)
        comments += gluing_text(w).splitlines()
        left = graph.lower_edges_by_x(j)[0]
        comments.append(f"  p_left (descent into I{left}) = {w.descent[left]:.6f}")
    if not graph.saddles():
        comments.append("no interior vertices: no gluing conditions")
    return coefficients_csv(tables, comments)


def run_gibbs(cfg):
    potential = resolve_potential(cfg.potential)
    r = gibbs_report(potential, cfg.beta, cfg.observable)
    rows = [[cfg.potential, cfg.beta, cfg.observable, r.value, r.nx, r.rel_change, r.boundary_ratio]]
    return write_csv(rows, ["potential", "beta", "observable", "value", "nodes", "rel_change", "boundary_ratio"],
                     cfg.provenance("gibbs"))


def _y_chunk(args):
    (cfg, model, x0, edge0), ids = args
    # the graph-limit samples use the stream family seed + 1 so they never share noise with HMM runs
    st = simulate_y(model, np.full(len(ids), x0), np.full(len(ids), edge0), cfg.t, seed=cfg.seed + 1,
                    dt_edge=cfg.dt_edge, dt_vertex=cfg.dt_vertex, replicate_ids=ids)
    return st.x, st.edge


def _hmm_chunk(args):
    (cfg, graph, row), ids = args
    potential = resolve_potential(cfg.potential)
    z = np.broadcast_to(np.asarray(cfg.z0, dtype=float), (len(ids), 2)).copy()
    res = simulate(z, row.scheme, cfg.params(row), potential, j_drift(potential), cfg.t, replicate_ids=ids)
    ok = ~res.diverged
    x = np.full(len(ids), np.nan)
    edge = np.full(len(ids), -1, dtype=np.int64)
    x[ok], edge[ok] = graph.project(res.z[ok], zeta_res=0.0)
    return x, edge


def _map_ids(fn, payload, n, threads):
    chunks = [c for c in np.array_split(np.arange(n), max(1, min(threads, n))) if c.size]
    tasks = [(payload, c) for c in chunks]
    if len(tasks) <= 1:
        out = [fn(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=len(tasks)) as pool:
            out = list(pool.map(fn, tasks))
    if not out:
        return np.empty(0), np.empty(0, dtype=np.int64)
    return np.concatenate([o[0] for o in out]), np.concatenate([o[1] for o in out])


def _graph_limit_samples(cfg):
    potential = resolve_potential(cfg.potential)
    model = build_graph_limit(potential, cfg.beta, n_energies=cfg.n_energies, zeta_res=cfg.zeta_res,
                              n_jobs=cfg.threads)
    x0, edge0 = model.graph.project(np.asarray(cfg.z0, dtype=float), zeta_res=0.0)
    if edge0 < 0:
        raise ConfigError(f"z0 = {cfg.z0} does not project onto an edge")
    x, edge = _map_ids(_y_chunk, (cfg, model, x0, edge0), cfg.n_samples, cfg.threads)
    return model, x0, edge0, x, edge


def run_ylimit(cfg):
    model, x0, edge0, x, edge = _graph_limit_samples(cfg)
    comments = cfg.provenance("ylimit") + [f"start x0 = {fmt(x0)} edge = I{edge0}"]
    rows = [[k, xi, f"I{e}"] for k, (xi, e) in enumerate(zip(x, edge))]
    return write_csv(rows, ["sample", "energy", "edge"], comments)


def run_compare(cfg):
    """Distance between projected HMM laws (one per row) and the graph-limit law at time ``t``."""
    model, x0, edge0, y_x, y_edge = _graph_limit_samples(cfg)
    rows = []
    for row in cfg.resolved_rows():
        x, edge = _map_ids(_hmm_chunk, (cfg, model.graph, row), cfg.n_samples, cfg.threads)
        if cfg.n_samples == 0 or not np.isfinite(x).any():
            rows.append([row.scheme, row.eps, row.tau, row.delta, np.nan, np.nan, np.nan, 0, y_x.size])
            continue
        rep = compare_projected_law(x, edge, y_x, y_edge)
        rows.append([row.scheme, row.eps, row.tau, row.delta, rep.ks, rep.ks_pvalue, rep.tv, rep.n_a, rep.n_b])
    comments = cfg.provenance("compare") + [f"start x0 = {fmt(x0)} edge = I{edge0}"]
    return write_csv(rows, ["scheme", "eps", "tau", "delta", "ks", "ks_pvalue", "tv", "n_hmm", "n_limit"], comments)


COMMANDS = {
    "table": run_table,
    "transitions": run_transitions,
    "graph": run_graph_analysis,
    "gibbs": run_gibbs,
    "ylimit": run_ylimit,
    "compare": run_compare,
}

_DEFAULT_PRESET = {"table": "table1", "transitions": "transitions_symmetric", "compare": "compare_double_well"}


def build_parser():
    parser = argparse.ArgumentParser(prog="irrevhmm", description="Irreversible Langevin sampling experiments.")
    parser.add_argument("--version", action="version", version=f"irrevhmm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--preset", help=f"built-in experiment: {', '.join(sorted(PRESETS))}")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (default: standard output)")
        p.add_argument("--replicates", type=int, help="number of independent replicates")
        p.add_argument("--threads", type=int, help="worker processes for replicate fan-out")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    preset = args.preset
    if preset is None and args.config is None:
        preset = _DEFAULT_PRESET.get(args.command)
    try:
        cfg = load_config(args.config, preset, args.overrides, args.seed, args.out, args.replicates, args.threads)
        text = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"irrevhmm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"irrevhmm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
