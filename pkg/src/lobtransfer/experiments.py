"""Experiment pipelines and their CSV artifacts.

Each pipeline takes an :class:`ExperimentManifest`, fans out over
scenarios and seeds, and writes only inside ``manifest.out``. All
randomness is derived from the manifest seeds, so rerunning a manifest
rewrites byte-identical files.
"""
from __future__ import annotations

import csv
import json
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import ScenarioConfig, maybe_reduce, resolve_scenario
from .distance import DistanceMatrix, cluster_scenarios, label_clusters, within_cross_means
from .kernel import derive_seed
from .rbm import CdParams, encode_tuples, rbm_distance_matrix
from .rl import LearningParams, Policy, QLearner, QTable, episode_seed, learner_stream, qtable_rows, train
from .simulation import EpisodeRecord, run_episode
from .stylized import histogram, scenario_facts, sf_distance_matrix
from .transfer import PiReuseParams, PrqParams, pi_reuse_learn, prq_learn

KINDS = ("simulate", "train", "sf-metrics", "rbm-metrics", "reuse-gain", "prq")

# episodes per seed when a kind is run without --episodes
DEFAULT_EPISODES = {"simulate": 1, "train": 200, "sf-metrics": 2, "rbm-metrics": 2, "reuse-gain": 20, "prq": 100}

FIGURE_MAP = {
    "fig2_rbm_heatmap": "rbm_distance_matrix_normalized.csv",
    "fig3_fig4_stylized_facts": "returns_<scenario>_<dt>.csv, acf_<scenario>.csv, sf_distance_matrix.csv",
    "fig5_reuse_gain": "reuse_curve.csv, reuse_gain.csv",
    "fig6_prq_vs_q": "seed_<s>/prq_rewards.csv, seed_<s>/qlearning_rewards.csv",
    "fig7_prq_w": "seed_<s>/prq_w.csv",
    "fig8_prq_p": "seed_<s>/prq_p.csv",
}


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException) -> None:
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


@dataclass
class ExperimentManifest:
    kind: str
    scenarios: List[str]
    seeds: List[int]
    out: str
    episodes: Optional[int] = None
    full_scale: bool = False
    library: List[str] = field(default_factory=list)
    library_seed: int = 0
    source_episodes: int = 100
    overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if not self.scenarios:
            raise ValueError("at least one scenario is required")
        for ref in list(self.scenarios) + list(self.library):
            if not ref.startswith("table1:") and not Path(ref).is_file():
                raise ValueError(f"scenario file not found: {ref}")
        if self.kind in ("reuse-gain", "prq") and not self.library:
            raise ValueError(f"{self.kind} needs a policy library (--library)")

    @property
    def n_episodes(self) -> int:
        return DEFAULT_EPISODES[self.kind] if self.episodes is None else self.episodes

    def scenario_configs(self, refs: Optional[Sequence[str]] = None) -> List[ScenarioConfig]:
        return [maybe_reduce(resolve_scenario(r), self.full_scale) for r in (refs or self.scenarios)]

    def to_json(self) -> str:
        import lobtransfer

        data = asdict(self)
        data["n_episodes"] = self.n_episodes
        data["versions"] = {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "lobtransfer": getattr(lobtransfer, "__version__", "0"),
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


@dataclass
class RunArtifacts:
    out: Path
    files: List[Path]
    results: Dict[str, Any] = field(default_factory=dict)


# -- CSV helpers -------------------------------------------------------------


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> List[Dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def tuple_row(episode: int, step: int, t) -> tuple:
    return (episode, step, t.state.bucket, int(t.state.position), int(t.action), t.reward,
            t.next_state.bucket, int(t.next_state.position))


def tuple_rows(tuples: Iterable, episode: int = 0):
    return (tuple_row(episode, k, t) for k, t in enumerate(tuples))


TUPLE_HEADER = ("episode", "step", "state_bucket", "position", "action", "reward", "next_bucket", "next_position")


def write_matrix(path: Path, m: DistanceMatrix) -> Path:
    return write_csv(path, ("scenario", *m.labels), m.rows())


# -- shared stages -------------------------------------------------------------


def collect_learning_episodes(scenario: ScenarioConfig, seed: int, episodes: int) -> List[EpisodeRecord]:
    """Run ``episodes`` consecutive days with one Q-learner; keep the full records."""
    learner = QLearner(QTable(), LearningParams(), learner_stream(seed))
    return [run_episode(scenario, episode_seed(seed, e), controller=learner) for e in range(episodes)]


def collect_all(manifest: ExperimentManifest) -> Dict[str, List[EpisodeRecord]]:
    out: Dict[str, List[EpisodeRecord]] = {}
    for cfg in manifest.scenario_configs():
        out[cfg.name] = [r for s in manifest.seeds for r in collect_learning_episodes(cfg, s, manifest.n_episodes)]
    return out


def train_library(manifest: ExperimentManifest) -> Dict[str, Policy]:
    """Greedy policies trained on each library scenario, seeded from ``library_seed``."""
    params = LearningParams()
    out = {}
    for k, cfg in enumerate(manifest.scenario_configs(manifest.library)):
        res = train(cfg, params, seed=derive_seed(manifest.library_seed, 8, k),
                    episodes=manifest.source_episodes, keep_tuples=False)
        out[cfg.name] = Policy(res.table, cfg.name)
    return out


def sf_results(records: Dict[str, List[EpisodeRecord]], market_opens: Dict[str, int]):
    facts = {name: scenario_facts(recs, market_opens[name]) for name, recs in records.items()}
    matrix = sf_distance_matrix(facts)
    return facts, matrix


def rbm_results(records: Dict[str, List[EpisodeRecord]], params: CdParams = CdParams(), min_tuples: int = 1000):
    sets = {name: encode_tuples([t for r in recs for t in r.tuples]) for name, recs in records.items()}
    return rbm_distance_matrix(sets, params, min_tuples=min_tuples)


def cluster_report(matrix: DistanceMatrix, k: int = 2) -> Dict[str, Any]:
    clusters = cluster_scenarios(matrix, k)
    within, cross = within_cross_means(matrix, clusters)
    return {"clusters": label_clusters(clusters, matrix.labels), "within": within, "cross": cross}


# -- pipelines -------------------------------------------------------------------


def _run_simulate(m: ExperimentManifest, out: Path) -> RunArtifacts:
    files = []
    for cfg in m.scenario_configs():
        for seed in m.seeds:
            d = out / cfg.name / f"seed_{seed}"
            for e in range(m.n_episodes):
                rec = run_episode(cfg, episode_seed(seed, e))
                sub = d if m.n_episodes == 1 else d / f"episode_{e}"
                files.append(write_csv(sub / "trades.csv", ("time", "price", "quantity"), rec.trades))
                files.append(write_csv(sub / "quotes.csv", ("time", "bid", "ask", "bid_vol", "ask_vol"), rec.quotes))
                files.append(write_csv(sub / "tuples.csv", TUPLE_HEADER, tuple_rows(rec.tuples, e)))
    return RunArtifacts(out, files)


def _run_train(m: ExperimentManifest, out: Path) -> RunArtifacts:
    files = []
    results = {}
    for cfg in m.scenario_configs():
        for seed in m.seeds:
            res = train(cfg, LearningParams(), seed=seed, episodes=m.n_episodes)
            d = out / cfg.name / f"seed_{seed}"
            files.append(write_csv(d / "train_rewards.csv", ("episode", "reward"), enumerate(res.episode_rewards)))
            files.append(write_csv(d / "qtable.csv", ("state", "action", "value"), qtable_rows(res.table)))
            rows = (tuple_row(e, k, t) for e, k, t in res.tuples)
            files.append(write_csv(d / "tuples.csv", TUPLE_HEADER, rows))
            results[f"{cfg.name}/seed_{seed}"] = res.episode_rewards
    return RunArtifacts(out, files, results)


def _run_sf(m: ExperimentManifest, out: Path, records=None) -> RunArtifacts:
    cfgs = m.scenario_configs()
    records = records if records is not None else collect_all(m)
    facts, matrix = sf_results(records, {c.name: c.market_open for c in cfgs})
    files = []
    for name, f in facts.items():
        files.append(write_csv(out / f"returns_{name}_1min.csv", ("return",), ((r,) for r in f.returns_1m)))
        files.append(write_csv(out / f"returns_{name}_10min.csv", ("return",), ((r,) for r in f.returns_10m)))
        rows = ((i, lag + 1, v) for i, curve in enumerate(f.acf_curves) for lag, v in enumerate(curve))
        files.append(write_csv(out / f"acf_{name}.csv", ("episode", "lag", "acf"), rows))
        for label, values in (("1min", f.returns_1m), ("10min", f.returns_10m)):
            edges, counts = histogram(values, bins=50)
            rows = ((edges[i], edges[i + 1], c) for i, c in enumerate(counts))
            files.append(write_csv(out / f"hist_{name}_{label}.csv", ("left", "right", "count"), rows))
    files.append(write_matrix(out / "sf_distance_matrix.csv", matrix))
    return RunArtifacts(out, files, {"sf_matrix": matrix, "sf": cluster_report(matrix)})


def _run_rbm(m: ExperimentManifest, out: Path, records=None) -> RunArtifacts:
    records = records if records is not None else collect_all(m)
    cd = CdParams(**m.overrides.get("cd", {}))
    res = rbm_results(records, cd, min_tuples=int(m.overrides.get("min_tuples", 1000)))
    files = [
        write_matrix(out / "rbm_distance_matrix_raw.csv", res.raw),
        write_matrix(out / "rbm_distance_matrix_normalized.csv", res.normalized),
    ]
    for name, model in res.models.items():
        p = out / "models" / f"rbm_{name}.txt"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(model.to_text(), encoding="utf-8")
        files.append(p)
    for name, recs in records.items():
        rows = (row for e, r in enumerate(recs) for row in tuple_rows(r.tuples, e))
        files.append(write_csv(out / "tuples" / f"tuples_{name}.csv", TUPLE_HEADER, rows))
    return RunArtifacts(out, files, {"rbm": res, "rbm_clusters": cluster_report(res.normalized)})


def _run_reuse(m: ExperimentManifest, out: Path, library=None) -> RunArtifacts:
    library = library if library is not None else train_library(m)
    target = m.scenario_configs()[0]
    reuse = PiReuseParams(**m.overrides.get("reuse", {}))
    gains: Dict[str, List[float]] = {name: [] for name in library}
    curve_rows, gain_rows = [], []
    for name, pol in library.items():
        for seed in m.seeds:
            rewards, _ = pi_reuse_learn(pol, target, m.n_episodes, seed, reuse)
            g = float(np.mean(rewards))
            gains[name].append(g)
            gain_rows.append((name, seed, g))
            curve_rows.extend((name, seed, e, r) for e, r in enumerate(rewards))
    files = [
        write_csv(out / "reuse_gain.csv", ("policy", "seed", "gain"), gain_rows),
        write_csv(out / "reuse_curve.csv", ("policy", "seed", "episode", "reward"), curve_rows),
    ]
    for name, pol in library.items():
        files.append(write_csv(out / "policies" / f"qtable_{name}.csv", ("state", "action", "value"),
                               qtable_rows(pol.table)))
    means = {name: float(np.mean(v)) for name, v in gains.items()}
    return RunArtifacts(out, files, {"gains": gains, "mean_gains": means})


def _run_prq(m: ExperimentManifest, out: Path, library=None) -> RunArtifacts:
    library = library if library is not None else train_library(m)
    target = m.scenario_configs()[0]
    params = PrqParams(**m.overrides.get("prq", {}))
    names = list(library)
    pols = [library[n] for n in names]
    files = []
    runs = {}
    jump = int(m.overrides.get("jumpstart_episodes", 10))
    for seed in m.seeds:
        res = prq_learn(pols, target, m.n_episodes, seed, params)
        q = train(target, LearningParams(), seed=seed, episodes=m.n_episodes, keep_tuples=False)
        d = out / f"seed_{seed}"
        n = len(pols) + 1
        wcols = ["episode", *(f"W_{j}" for j in range(n))]
        pcols = ["episode", *(f"P_{j}" for j in range(n))]
        files.append(write_csv(d / "prq_rewards.csv", ("episode", "reward", "selected_j"),
                               ((e, r, j) for e, (r, j) in enumerate(zip(res.rewards, res.selected)))))
        files.append(write_csv(d / "prq_w.csv", wcols, ((e, *row) for e, row in enumerate(res.gains))))
        files.append(write_csv(d / "prq_p.csv", pcols, ((e, *row) for e, row in enumerate(res.probabilities))))
        files.append(write_csv(d / "qlearning_rewards.csv", ("episode", "reward"), enumerate(q.episode_rewards)))
        runs[seed] = {"prq": res, "q": q.episode_rewards}
    files.append(write_csv(out / "prq_library.csv", ("index", "policy"),
                           [(0, "ongoing"), *((j + 1, nm) for j, nm in enumerate(names))]))
    prq_first = float(np.mean([np.mean(r["prq"].rewards[:jump]) for r in runs.values()]))
    q_first = float(np.mean([np.mean(r["q"][:jump]) for r in runs.values()]))
    p_final = np.mean([r["prq"].probabilities[-1] for r in runs.values()], axis=0)
    return RunArtifacts(out, files, {
        "runs": runs, "library": ["ongoing", *names], "prq_first": prq_first, "q_first": q_first,
        "p_final": p_final,
    })


_PIPELINES = {
    "simulate": _run_simulate,
    "train": _run_train,
    "sf-metrics": _run_sf,
    "rbm-metrics": _run_rbm,
    "reuse-gain": _run_reuse,
    "prq": _run_prq,
}


def run_experiment(manifest: ExperimentManifest, **cached) -> RunArtifacts:
    """Run the pipeline for ``manifest.kind`` and write its artifacts plus manifest.json.

    ``cached`` may pass precomputed ``records`` (metric kinds) or a trained
    ``library`` (transfer kinds) so several pipelines can share work.
    """
    manifest.scenario_configs()  # scenario errors surface before any stage runs
    if manifest.library:
        manifest.scenario_configs(manifest.library)
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    try:
        art = _PIPELINES[manifest.kind](manifest, out, **cached)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(manifest.kind, exc) from exc
    art.files.insert(0, out / "manifest.json")
    return art


# -- summary -----------------------------------------------------------------------


def _matrix_from_csv(path: Path) -> DistanceMatrix:
    rows = read_csv(path)
    labels = [r["scenario"] for r in rows]
    return DistanceMatrix(np.array([[float(r[c]) for c in labels] for r in rows]), labels)


def _fmt_clusters(clusters) -> str:
    return " | ".join(",".join(c) for c in clusters)


def summarize(root: str | Path, jumpstart_episodes: int = 10) -> Path:
    """Write ``summary.txt`` (flat key=value lines) from whatever artifacts exist under ``root``."""
    root = Path(root)
    lines: List[str] = []

    def section(name: str, path: Optional[Path], fn) -> None:
        if path is None or not path.exists():
            lines.append(f"{name}=absent")
            return
        fn(path)

    def find(name: str) -> Optional[Path]:
        hits = sorted(root.rglob(name))
        return hits[0] if hits else None

    def sf(path):
        rep = cluster_report(_matrix_from_csv(path))
        lines.append(f"sf.clusters={_fmt_clusters(rep['clusters'])}")
        lines.append(f"sf.within_mean={rep['within']!r}")
        lines.append(f"sf.cross_mean={rep['cross']!r}")

    def rbm(path):
        rep = cluster_report(_matrix_from_csv(path))
        lines.append(f"rbm.clusters={_fmt_clusters(rep['clusters'])}")
        lines.append(f"rbm.within_mean={rep['within']!r}")
        lines.append(f"rbm.cross_mean={rep['cross']!r}")

    def gains(path):
        per: Dict[str, List[float]] = {}
        for r in read_csv(path):
            per.setdefault(r["policy"], []).append(float(r["gain"]))
        for name, v in per.items():
            lines.append(f"reuse_gain.{name}={float(np.mean(v))!r}")
        lines.append(f"reuse_gain.seeds={max(len(v) for v in per.values())}")

    def prq(first_path):
        seeds = sorted(p.parent for p in root.rglob("prq_rewards.csv"))
        prq_means, q_means, finals = [], [], []
        for d in seeds:
            prq_means.append(np.mean([float(r["reward"]) for r in read_csv(d / "prq_rewards.csv")][:jumpstart_episodes]))
            qpath = d / "qlearning_rewards.csv"
            if qpath.exists():
                q_means.append(np.mean([float(r["reward"]) for r in read_csv(qpath)][:jumpstart_episodes]))
            prow = read_csv(d / "prq_p.csv")[-1]
            finals.append([float(v) for k, v in prow.items() if k.startswith("P_")])
        pm = float(np.mean(prq_means))
        lines.append(f"prq.first{jumpstart_episodes}_mean={pm!r}")
        if q_means:
            qm = float(np.mean(q_means))
            lines.append(f"qlearning.first{jumpstart_episodes}_mean={qm!r}")
            lines.append(f"prq.jumpstart_delta={pm - qm!r}")
        else:
            lines.append("prq.jumpstart_delta=absent")
        p = np.mean(finals, axis=0)
        names = {}
        lib = find("prq_library.csv")
        if lib is not None:
            names = {int(r["index"]): r["policy"] for r in read_csv(lib)}
        for j, v in enumerate(p):
            lines.append(f"prq.final_P.{names.get(j, j)}={float(v)!r}")
        lines.append(f"prq.seeds={len(seeds)}")

    section("sf", find("sf_distance_matrix.csv"), sf)
    section("rbm", find("rbm_distance_matrix_normalized.csv"), rbm)
    section("reuse_gain", find("reuse_gain.csv"), gains)
    section("prq", find("prq_rewards.csv"), prq)
    for fig, files in FIGURE_MAP.items():
        lines.append(f"figure.{fig}={files}")
    lines.append(
        "note.non_canonical_defaults=episode counts (train 200, reuse-gain K=20, prq 100, source 100), "
        "reduced scale (25 ZI agents, 2-hour day), learner reward and cadence, quantizer edges, "
        "RBM encoding and CD hyperparameters, temperature midpoint K/2 and scale K/10"
    )
    path = root / "summary.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
