"""The evolutionary loop over symbolic networks.

Each generation the current population (already trained and ranked) breeds
``N`` offspring by cone crossover, activation mutation and candidate
mutation.  Offspring inherit their parents' trained weights and are trained
further; parents are never retrained, so the top training score can only go
up.  Parents plus offspring are ranked on the training set and the best
``N`` survive.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import metrics as _metrics
from .dataset import COLUMNS, to_columns
from .dimensional import CandidateSet, PiGroup, candidate_set, normalizer
from .expression import Expr, monomial, simplify
from .network import (
    ACTIVATION_CODES,
    Layer,
    SymbolicNetwork,
    decode,
    design_matrix,
    predict_dl,
    random_network,
    target_values,
    train,
)

METRICS = {
    # id: (function(obs, pred), higher_is_better)
    "r2": (_metrics.r2, True),
    "rmse": (_metrics.rmse, False),
    "wmape": (_metrics.wmape, False),
}


class EvolutionError(RuntimeError):
    pass


@dataclass
class EsrnConfig:
    N: int = 100
    T: int = 200
    topology: tuple = (5, 3, 1)
    metric: str = "r2"
    crossover_rate: float = 0.5
    activation_rate: float = 0.1
    candidate_rate: float = 0.2
    seed: int = 0
    epochs: int = 500
    lr: float = 0.01
    workers: int = 1

    def __post_init__(self):
        self.topology = tuple(int(s) for s in self.topology)
        self.validate()

    def validate(self) -> None:
        if self.N < 2 and self.T > 1:
            raise ValueError("N must be at least 2")
        if self.N < 1 or self.T < 1:
            raise ValueError("N and T must be positive")
        if len(self.topology) < 2 or min(self.topology) < 1 or self.topology[-1] != 1:
            raise ValueError("topology entries must be >= 1 and end with 1")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; choose from {sorted(METRICS)}")
        for name in ("crossover_rate", "activation_rate", "candidate_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.epochs < 0 or self.lr <= 0 or self.workers < 1:
            raise ValueError("epochs >= 0, lr > 0 and workers >= 1 required")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["topology"] = list(self.topology)
        return out

    @classmethod
    def from_dict(cls, obj: Mapping) -> "EsrnConfig":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# -- a mutable graph view used by crossover --------------------------------------

@dataclass
class _Node:
    act: int
    bias: float
    edges: dict  # source node id -> weight


class _Graph:
    """Networks as id-addressed nodes; level 0 holds the input slots."""

    def __init__(self, net: SymbolicNetwork):
        self.output = net.output
        self.groups = {}
        self.nodes = {}
        self.levels = [[]]
        self._next = 0
        for g in net.inputs:
            self.levels[0].append(self._new_input(g))
        for layer in net.layers:
            below = self.levels[-1]
            ids = []
            for i in range(layer.size):
                edges = {below[j]: float(layer.weights[i, j]) for j in np.flatnonzero(layer.mask[i])}
                ids.append(self._new_node(_Node(int(layer.activations[i]), float(layer.bias[i]), edges)))
            self.levels.append(ids)

    def _new_input(self, group):
        nid = self._next
        self._next += 1
        self.groups[nid] = group
        return nid

    def _new_node(self, node):
        nid = self._next
        self._next += 1
        self.nodes[nid] = node
        return nid

    @property
    def out_id(self):
        return self.levels[-1][0]

    def cone_tops(self) -> list:
        """Nodes one level below the output that feed it, in level order."""
        edges = self.nodes[self.out_id].edges
        return [nid for nid in self.levels[-2] if nid in edges]

    def level_of(self, nid) -> int:
        for li, ids in enumerate(self.levels):
            if nid in ids:
                return li
        raise KeyError(nid)

    def cone(self, top) -> set:
        seen = {top}
        stack = [top]
        while stack:
            nid = stack.pop()
            if nid in self.nodes:
                for src in self.nodes[nid].edges:
                    if src not in seen:
                        seen.add(src)
                        stack.append(src)
        return seen

    def outgoing(self, nid) -> float:
        return sum(abs(n.edges[nid]) for n in self.nodes.values() if nid in n.edges)

    def remove(self, nid) -> None:
        for li, ids in enumerate(self.levels):
            if nid in ids:
                ids.remove(nid)
        self.nodes.pop(nid, None)
        self.groups.pop(nid, None)
        for n in self.nodes.values():
            n.edges.pop(nid, None)

    def collect_garbage(self) -> None:
        """Drop nodes that no longer reach the output (keeping one input slot)."""
        live = self.cone(self.out_id)
        for li in range(len(self.levels) - 1):
            for nid in list(self.levels[li]):
                if nid in live:
                    continue
                if li == 0 and len(self.levels[0]) == 1:
                    continue
                self.remove(nid)

    def graft(self, donor: "_Graph", top, weight: float, position: int) -> None:
        """Copy ``donor``'s cone under ``top`` in, wired to the output with ``weight``."""
        members = donor.cone(top)
        mapping = {}
        for li, ids in enumerate(donor.levels[:-1]):
            for nid in ids:
                if nid not in members:
                    continue
                if li == 0:
                    group = donor.groups[nid]
                    existing = [k for k in self.levels[0] if self.groups[k] == group]
                    mapping[nid] = existing[0] if existing else self._new_input(group)
                    if not existing:
                        self.levels[0].append(mapping[nid])
                    continue
                src = donor.nodes[nid]
                edges = {}
                for s, w in src.edges.items():
                    edges[mapping[s]] = edges.get(mapping[s], 0.0) + w
                new = self._new_node(_Node(src.act, src.bias, edges))
                mapping[nid] = new
                if nid == top:
                    self.levels[li].insert(position, new)
                else:
                    self.levels[li].append(new)
        out_edges = self.nodes[self.out_id].edges
        if top in donor.groups and mapping[top] in out_edges:
            out_edges[mapping[top]] += weight
        else:
            out_edges[mapping[top]] = weight

    def enforce(self, topology: Sequence[int]) -> None:
        """Shrink each level to its bound, dropping the weakest-outgoing nodes first."""
        for li in range(len(self.levels) - 2, -1, -1):
            bound = topology[li]
            while len(self.levels[li]) > bound:
                ids = self.levels[li]
                scores = [self.outgoing(nid) for nid in ids]
                self.remove(ids[int(np.argmin(scores))])
            self.collect_garbage()

    def to_network(self) -> SymbolicNetwork:
        inputs = tuple(self.groups[nid] for nid in self.levels[0])
        layers = []
        below = self.levels[0]
        for ids in self.levels[1:]:
            pos = {nid: j for j, nid in enumerate(below)}
            m, k = len(ids), len(below)
            weights = np.zeros((m, k))
            mask = np.zeros((m, k), dtype=bool)
            for i, nid in enumerate(ids):
                for src, w in self.nodes[nid].edges.items():
                    weights[i, pos[src]] = w
                    mask[i, pos[src]] = True
            acts = np.array([self.nodes[nid].act for nid in ids], dtype=int)
            bias = np.array([self.nodes[nid].bias for nid in ids], dtype=float)
            layers.append(Layer(acts, weights, mask, bias))
            below = ids
        return SymbolicNetwork(inputs, self.output, layers)


def same_network(a: SymbolicNetwork, b: SymbolicNetwork) -> bool:
    """Equal structure and parameters."""
    if a.structure_key() != b.structure_key():
        return False
    return all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))


# -- operators ---------------------------------------------------------------------

def init_population(config: EsrnConfig, candidates: CandidateSet, rng=None) -> list:
    if not candidates.inputs or not candidates.outputs:
        raise ValueError("candidate set is empty")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    return [random_network(rng, candidates.inputs, candidates.outputs, config.topology) for _ in range(config.N)]


def crossover(a: SymbolicNetwork, b: SymbolicNetwork, rng, topology: Optional[Sequence[int]] = None):
    """Swap equally many randomly chosen output cones between ``a`` and ``b``.

    A cone is a neuron feeding the output neuron together with everything
    upstream of it; its edge weight into the output travels with it.  Input
    slots holding the same group are merged, layer bounds are re-enforced and
    unreachable neurons are removed.  Parents are not modified.
    """
    if same_network(a, b):
        return a.offspring(), b.offspring()
    if topology is None:
        topology = tuple(max(x, y) for x, y in zip(a.topology, b.topology))
    ga, gb = _Graph(a), _Graph(b)
    tops_a, tops_b = ga.cone_tops(), gb.cone_tops()
    if not tops_a or not tops_b or len(ga.levels) != len(gb.levels):
        return a.offspring(), b.offspring()
    s = int(rng.integers(1, min(len(tops_a), len(tops_b)) + 1))
    pick_a = sorted(rng.choice(len(tops_a), size=s, replace=False).tolist())
    pick_b = sorted(rng.choice(len(tops_b), size=s, replace=False).tolist())
    child_a = _exchange(ga, [tops_a[i] for i in pick_a], gb, [tops_b[i] for i in pick_b], topology)
    child_b = _exchange(_Graph(b), [tops_b[i] for i in pick_b], _Graph(a), [tops_a[i] for i in pick_a], topology)
    return child_a, child_b


def _exchange(recipient: _Graph, removed: list, donor: _Graph, added: list, topology) -> SymbolicNetwork:
    out_edges = recipient.nodes[recipient.out_id].edges
    level = recipient.levels[-2]
    positions = [level.index(t) for t in removed]
    for t in removed:
        out_edges.pop(t)
        if t in recipient.nodes:
            # a hidden cone top feeds only the output; input slots may be shared
            recipient.remove(t)
    for top, pos in sorted(zip(added, positions), key=lambda tp: tp[1]):
        recipient.graft(donor, top, donor.nodes[donor.out_id].edges[top], pos)
    recipient.collect_garbage()
    recipient.enforce(topology)
    return recipient.to_network()


def mutate_activation(net: SymbolicNetwork, rng, p: float, force: bool = False) -> SymbolicNetwork:
    """Each neuron, with probability ``p``, switches to a different activation.

    ``force`` mutates exactly one uniformly chosen neuron instead.
    """
    child = net.offspring()
    neurons = [(li, i) for li, layer in enumerate(child.layers) for i in range(layer.size)]
    if force:
        chosen = [neurons[int(rng.integers(len(neurons)))]]
    else:
        draws = rng.random(len(neurons))
        chosen = [n for n, u in zip(neurons, draws) if u < p]
    for li, i in chosen:
        current = int(child.layers[li].activations[i])
        options = [c for c in ACTIVATION_CODES if c != current]
        child.layers[li].activations[i] = options[int(rng.integers(len(options)))]
    return child


def _candidate_targets(net: SymbolicNetwork, candidates: CandidateSet) -> list:
    targets = []
    for slot, g in enumerate(net.inputs):
        if any(c not in net.inputs for c in candidates.inputs):
            targets.append(slot)
    if len(candidates.outputs) > 1:
        targets.append("output")
    return targets


def mutate_candidate(
    net: SymbolicNetwork,
    candidates: CandidateSet,
    rng,
    p: float,
    target=None,
) -> SymbolicNetwork:
    """With probability ``p`` re-draw one input slot or the output group.

    The replacement differs from the current group and, for input slots,
    from the groups held by the other slots.  ``target`` ("output" or a slot
    index) forces the mutation onto that position.  Weights are untouched.
    """
    child = net.offspring()
    if target is None:
        if rng.random() >= p:
            return child
        targets = _candidate_targets(net, candidates)
        if not targets:
            return child
        target = targets[int(rng.integers(len(targets)))]
    if target == "output":
        options = [g for g in candidates.outputs if g != net.output]
        if options:
            child.output = options[int(rng.integers(len(options)))]
        return child
    options = [g for g in candidates.inputs if g not in net.inputs]
    if options:
        inputs = list(child.inputs)
        inputs[int(target)] = options[int(rng.integers(len(options)))]
        child.inputs = tuple(inputs)
    return child


# -- scoring and selection ------------------------------------------------------------

def sample_env(samples) -> dict:
    names = [c for c in COLUMNS if all(getattr(s, c) is not None for s in samples)]
    return to_columns(samples, names)


def score(net: SymbolicNetwork, env: Mapping, metric: str = "r2") -> float:
    """Metric of the dimensional ``Dl`` prediction, oriented so higher is better.

    Dead networks (non-finite loss or predictions) score ``-inf``.
    """
    if not math.isfinite(net.loss if net.trained else 0.0):
        return -math.inf
    pred = predict_dl(net, env)
    if not np.all(np.isfinite(pred)):
        return -math.inf
    fn, higher = METRICS[metric]
    with np.errstate(over="ignore", invalid="ignore"):
        value = fn(env["Dl"], pred)
    if not math.isfinite(value):
        return -math.inf
    return value if higher else -value


def _train_one(net: SymbolicNetwork, env: Mapping, epochs: int, lr: float) -> SymbolicNetwork:
    X = design_matrix(net, env)
    y = target_values(net, env)
    trained, _ = train(net, X, y, epochs=epochs, lr=lr)
    return trained


def train_population(population: list, env: Mapping, epochs: int, lr: float, metric: str, workers: int = 1) -> list:
    """Train every untrained member and refresh its fitness; order is preserved."""
    todo = [i for i, net in enumerate(population) if not net.trained]
    out = list(population)
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _train_one(population[i], env, epochs, lr), todo))
    else:
        results = [_train_one(population[i], env, epochs, lr) for i in todo]
    for i, net in zip(todo, results):
        net.fitness = score(net, env, metric)
        out[i] = net
    return out


def rank(population: list) -> list:
    """Indices sorted by fitness (desc), then fewer edges, then position."""
    def key(i):
        f = population[i].fitness
        f = -math.inf if f is None or math.isnan(f) else f
        return (-f, population[i].n_edges, i)

    return sorted(range(len(population)), key=key)


def rank_and_select(
    population: list,
    metric: str,
    env: Mapping,
    N: int,
    epochs: int = 500,
    lr: float = 0.01,
    workers: int = 1,
) -> list:
    """Train what is untrained, then keep the best ``N``.

    Structural duplicates are pushed behind every distinct network so the
    population does not collapse onto copies of one candidate; they only
    survive when there are fewer than ``N`` distinct structures.  Dead
    networks are kept only when nothing else is left.
    """
    population = train_population(population, env, epochs, lr, metric, workers)
    order = rank(population)
    seen = set()
    first, dupes = [], []
    for i in order:
        key = population[i].structure_key()
        (dupes if key in seen else first).append(i)
        seen.add(key)
    alive = [i for i in first + dupes if population[i].fitness > -math.inf]
    dead = [i for i in first + dupes if not population[i].fitness > -math.inf]
    return [population[i] for i in (alive + dead)[:N]]


# -- generation log ---------------------------------------------------------------------

@dataclass
class GenerationRecord:
    generation: int
    train: float
    test: float
    network: dict


@dataclass
class GenerationLog:
    metric: str = "r2"
    records: list = field(default_factory=list)

    def append(self, record: GenerationRecord) -> None:
        if self.records and record.generation <= self.records[-1].generation:
            raise ValueError("generation indices must increase")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def train_scores(self) -> list:
        return [r.train for r in self.records]

    @property
    def test_scores(self) -> list:
        return [r.test for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["generation", f"{self.metric}_train", f"{self.metric}_test"])
        for r in self.records:
            writer.writerow([r.generation, repr(float(r.train)), repr(float(r.test))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"metric": self.metric, "generations": [asdict(r) for r in self.records]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "GenerationLog":
        log = cls(obj.get("metric", "r2"))
        for r in obj["generations"]:
            log.append(GenerationRecord(int(r["generation"]), float(r["train"]), float(r["test"]), r["network"]))
        return log


def select_best_generation(log) -> int:
    """Generation with the highest test score; the earliest one on ties.

    Accepts a :class:`GenerationLog` or a plain sequence of test scores
    (numbered from 1).
    """
    if isinstance(log, GenerationLog):
        gens, scores = [r.generation for r in log.records], log.test_scores
    else:
        scores = list(log)
        gens = list(range(1, len(scores) + 1))
    if not scores:
        raise ValueError("empty generation log")
    vals = [(-math.inf if not math.isfinite(s) else s) for s in scores]
    return gens[int(np.argmax(vals))]


def plateau(log, tol: float = 1e-3) -> tuple[int, int]:
    """First and last generation of the contiguous run around the best
    generation whose test score stays within ``tol`` of the peak."""
    if isinstance(log, GenerationLog):
        gens, scores = [r.generation for r in log.records], log.test_scores
    else:
        scores = list(log)
        gens = list(range(1, len(scores) + 1))
    best = gens.index(select_best_generation(log))
    peak = scores[best]
    lo = hi = best
    while lo > 0 and scores[lo - 1] >= peak - tol:
        lo -= 1
    while hi < len(scores) - 1 and scores[hi + 1] >= peak - tol:
        hi += 1
    return gens[lo], gens[hi]


# -- the loop -------------------------------------------------------------------------------

def breed(population: list, config: EsrnConfig, candidates: CandidateSet, seed_seq) -> list:
    """``config.N`` offspring; each draws from its own random stream."""
    streams = seed_seq.spawn(config.N)
    children = []
    n = len(population)
    for k, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        parent = population[k % n]
        child = parent.offspring()
        if n > 1 and rng.random() < config.crossover_rate:
            j = int(rng.integers(n - 1))
            mate = population[j if j < k % n else j + 1]
            child = crossover(parent, mate, rng, config.topology)[0]
        child = mutate_activation(child, rng, config.activation_rate)
        child = mutate_candidate(child, candidates, rng, config.candidate_rate)
        if same_network(child, parent):
            if rng.random() < 0.5 or not _candidate_targets(child, candidates):
                child = mutate_activation(child, rng, 1.0, force=True)
            else:
                targets = _candidate_targets(child, candidates)
                child = mutate_candidate(child, candidates, rng, 1.0, target=targets[int(rng.integers(len(targets)))])
        children.append(child)
    return children


@dataclass
class RunResult:
    network: SymbolicNetwork
    expression: Expr
    simplified: Expr
    log: GenerationLog
    best_generation: int
    plateau: tuple
    config: EsrnConfig
    readout: tuple = ()  # (C, {var: exponent}, method) on the training rows

    def dimensional_form(self):
        """``(C, {variable: exponent})`` for ``Dl`` if the simplified
        expression is a monomial, else None."""
        return dimensional_exponents(self.simplified, self.network.output)

    def exponents(self, env: Mapping):
        """``(C, {variable: exponent}, method)``; see :func:`read_exponents`."""
        return read_exponents(self.simplified, self.network.output, env)


def run(
    config: EsrnConfig,
    train_samples: Sequence,
    test_samples: Sequence,
    candidates: Optional[CandidateSet] = None,
    snap_tol: float = 0.05,
    progress: Optional[Callable[[GenerationRecord], None]] = None,
) -> RunResult:
    if candidates is None:
        candidates = candidate_set()
    if not train_samples or not test_samples:
        raise ValueError("train and test sets must be non-empty")
    env_train, env_test = sample_env(train_samples), sample_env(test_samples)
    if "Dl" not in env_train or "Dl" not in env_test:
        raise ValueError("samples need observed Dl")
    master = np.random.SeedSequence(config.seed)
    init_ss, *gen_ss = master.spawn(config.T)
    population = init_population(config, candidates, np.random.default_rng(init_ss))
    log = GenerationLog(config.metric)
    for gen in range(1, config.T + 1):
        if gen > 1:
            population = population + breed(population, config, candidates, gen_ss[gen - 2])
        population = rank_and_select(population, config.metric, env_train, config.N,
                                     config.epochs, config.lr, config.workers)
        top = population[0]
        if not top.fitness > -math.inf:
            raise EvolutionError(f"every candidate is dead in generation {gen}")
        record = GenerationRecord(gen, top.fitness, score(top, env_test, config.metric), top.to_json())
        log.append(record)
        if progress is not None:
            progress(record)
    best_gen = select_best_generation(log)
    best = SymbolicNetwork.from_json(log.records[best_gen - 1].network)
    best.fitness = log.records[best_gen - 1].train
    expr = decode(best)
    simple = simplify(expr, snap_tol, env=env_train, target=target_values(best, env_train))
    readout = read_exponents(simple, best.output, env_train)
    return RunResult(best, expr, simple, log, best_gen, plateau(log), config, readout)


# -- reading off exponents ------------------------------------------------------------------

def dimensional_exponents(expr: Expr, output: PiGroup):
    """Turn ``output_group = C * prod(group ** p)`` into ``Dl = C * prod(var ** q)``.

    Returns ``(C, {var: q})`` over the raw input variables, or None when the
    expression is not a monomial.
    """
    mono = monomial(expr)
    if mono is None:
        return None
    c, powers = mono
    exps: dict = {}
    for group, p in powers.items():
        for var, e in group.exponents:
            exps[var] = exps.get(var, 0.0) + p * e
    for var, e in normalizer(output).exponents:
        exps[var] = exps.get(var, 0.0) + e
    return c, {k: float(v) for k, v in exps.items()}


def fit_power_law(pred, env: Mapping, variables: Sequence[str] = ("w", "d", "U", "Ustar")):
    """Least-squares ``ln pred = ln C + sum q_i ln x_i``; returns ``(C, {var: q})``.

    A numeric read-out for predictors that do not decode to a monomial.
    """
    pred = np.asarray(pred, dtype=float)
    ok = pred > 0
    A = np.column_stack([np.ones(ok.sum())] + [np.log(np.asarray(env[v], dtype=float)[ok]) for v in variables])
    coef, *_ = np.linalg.lstsq(A, np.log(pred[ok]), rcond=None)
    return float(np.exp(coef[0])), dict(zip(variables, map(float, coef[1:])))


def read_exponents(expr: Expr, output: PiGroup, env: Mapping, variables: Sequence[str] = ("w", "d", "U", "Ustar")):
    """Power-law reading of an evolved formula for ``Dl``.

    A monomial is read symbolically (method ``"symbolic"``).  Anything else
    is summarised by its log-log least-squares elasticities over ``env``
    (method ``"fitted"``); for a monomial both readings coincide.
    """
    form = dimensional_exponents(expr, output)
    if form is not None:
        c, exps = form
        return c, {v: exps.get(v, 0.0) for v in variables}, "symbolic"
    n = len(np.atleast_1d(env[variables[0]]))
    values = np.broadcast_to(np.asarray(expr.evaluate(env), dtype=float), (n,))
    pred = values * np.asarray(normalizer(output).evaluate(env), dtype=float)
    c, exps = fit_power_law(pred, env, variables)
    return c, exps, "fitted"
