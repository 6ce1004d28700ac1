"""Linear-genotype symbolic regression engine.

Candidate model expressions live as fixed-length symbol strings split into a
head (operators and leaves allowed) and a tail (leaves only).  With head
length h and maximum operator arity a_max, a tail of length
h * (a_max - 1) + 1 guarantees that a depth-first pre-order decode always
finds enough leaves to close the tree, so every genotype is a valid
expression.  Variation operators (point mutation, one-point crossover) act on
the linear string and therefore never produce syntactically broken offspring.

Phenotypes are compared through a canonical polynomial form.  The operator
set is restricted to ring operations (+, -, *, unary negation) precisely so
that expansion into a monomial-coefficient map is exact and two genotypes
with the same key are the same function.

Multi-objective fitness handling (non-dominated sorting, crowding distance,
mu + lambda survivor truncation) follows the standard NSGA-II scheme, with
one extension: candidates carrying the divergence sentinel in any objective
are demoted behind every finitely-ranked front.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DIVERGENCE_SENTINEL",
    "OP_TABLE",
    "Symbol",
    "ConstantsPool",
    "SymbolSet",
    "GepConfig",
    "Genotype",
    "ExprTree",
    "Candidate",
    "StructureError",
    "ConfigurationError",
    "ExpressionSyntaxError",
    "op_symbol",
    "terminal",
    "constant",
    "literal",
    "random_genotype",
    "decode",
    "preorder",
    "eval_tree",
    "tree_polynomial",
    "polynomial_key",
    "polynomial_eval",
    "canonical_key",
    "parse_expression",
    "mutate",
    "crossover",
    "dominates",
    "fast_nondominated_sort",
    "crowding_distance",
    "rank_population",
    "evolve_generation",
    "select_survivors",
]

# Objective value standing in for a failed expensive evaluation.  Kept well
# above any realistic normalized error so sentinel rows are always dominated.
DIVERGENCE_SENTINEL = 9999.0


class StructureError(ValueError):
    """A genotype or tree violates the head/tail layout contract."""


class ConfigurationError(ValueError):
    """An engine configuration cannot produce valid genotypes."""


class ExpressionSyntaxError(ValueError):
    """A textual expression uses syntax outside the supported ring ops."""


def _add(a, b):
    return a + b


def _sub(a, b):
    return a - b


def _mul(a, b):
    return a * b


def _neg(a):
    return -a


# name -> (arity, implementation).  All operators are closed over floats and
# numpy arrays alike; broadcasting is what lets one tree evaluate a whole
# feature table column-wise.
OP_TABLE: dict[str, tuple[int, Callable]] = {
    "+": (2, _add),
    "-": (2, _sub),
    "*": (2, _mul),
    "neg": (1, _neg),
}


@dataclass(frozen=True)
class Symbol:
    """One slot of a genotype.

    kind is one of "op", "term", "const", "lit".  Operators carry their
    arity, terminals their feature name, constants an index into the run's
    ConstantsPool, and literals an explicit float payload (used by parsed
    reference expressions, never by randomly generated genotypes).
    """

    kind: str
    name: str = ""
    arity: int = 0
    index: int = 0
    value: float = 0.0

    def is_leaf(self) -> bool:
        return self.kind != "op"

    def label(self) -> str:
        if self.kind == "op":
            return self.name
        if self.kind == "term":
            return self.name
        if self.kind == "const":
            return f"c{self.index}"
        return repr(self.value)


def op_symbol(name: str) -> Symbol:
    if name not in OP_TABLE:
        raise ConfigurationError(f"unknown operator {name!r}")
    return Symbol(kind="op", name=name, arity=OP_TABLE[name][0])


def terminal(name: str) -> Symbol:
    return Symbol(kind="term", name=name)


def constant(index: int) -> Symbol:
    if index < 0:
        raise ConfigurationError("constant index must be non-negative")
    return Symbol(kind="const", index=index)


def literal(value: float) -> Symbol:
    return Symbol(kind="lit", value=float(value))


@dataclass(frozen=True)
class ConstantsPool:
    """Fixed bank of ephemeral constants shared by a whole run.

    Values are drawn once from a uniform range at run start; genotypes refer
    to them by index, so reproducing the pool from its seed reproduces every
    expression exactly.
    """

    values: tuple[float, ...]
    seed: int

    @classmethod
    def from_seed(cls, seed: int, size: int = 5,
                  low: float = -2.0, high: float = 2.0) -> "ConstantsPool":
        if size < 0:
            raise ConfigurationError("constant pool size must be >= 0")
        if not low < high:
            raise ConfigurationError("constant range must be non-empty")
        rng = np.random.default_rng(seed)
        values = tuple(float(v) for v in rng.uniform(low, high, size=size))
        return cls(values=values, seed=int(seed))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SymbolSet:
    """The alphabet a run samples genotypes from."""

    operators: tuple[str, ...] = ("+", "-", "*")
    terminals: tuple[str, ...] = ()
    n_constants: int = 5

    def __post_init__(self):
        for name in self.operators:
            if name not in OP_TABLE:
                raise ConfigurationError(f"unknown operator {name!r}")
        if not self.operators:
            raise ConfigurationError("symbol set needs at least one operator")
        if not self.terminals and self.n_constants == 0:
            raise ConfigurationError("symbol set needs terminals or constants")

    @property
    def max_arity(self) -> int:
        return max(OP_TABLE[name][0] for name in self.operators)

    def leaf_symbols(self) -> tuple[Symbol, ...]:
        leaves = [terminal(name) for name in self.terminals]
        leaves.extend(constant(i) for i in range(self.n_constants))
        return tuple(leaves)

    def head_symbols(self) -> tuple[Symbol, ...]:
        return tuple(op_symbol(name) for name in self.operators) + self.leaf_symbols()


@dataclass(frozen=True)
class GepConfig:
    """Engine parameters independent of the evaluation problem."""

    symbols: SymbolSet = field(default_factory=SymbolSet)
    head_len: int = 8
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9

    def __post_init__(self):
        if self.head_len < 1:
            raise ConfigurationError("head length must be >= 1")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigurationError("mutation rate must lie in [0, 1]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ConfigurationError("crossover rate must lie in [0, 1]")

    @property
    def tail_len(self) -> int:
        return self.head_len * (self.symbols.max_arity - 1) + 1

    @property
    def genome_len(self) -> int:
        return self.head_len + self.tail_len


@dataclass(frozen=True)
class Genotype:
    """A fixed-length symbol string with head/tail layout."""

    symbols: tuple[Symbol, ...]
    head_len: int

    @property
    def tail_len(self) -> int:
        return len(self.symbols) - self.head_len

    def validate(self, max_arity: int | None = None) -> None:
        """Raise StructureError unless the layout invariants hold."""
        if self.head_len < 1:
            raise StructureError("head length must be >= 1")
        if len(self.symbols) <= self.head_len:
            raise StructureError("genotype has no tail")
        for pos, sym in enumerate(self.symbols):
            if sym.kind == "op" and sym.arity != OP_TABLE[sym.name][0]:
                raise StructureError(
                    f"operator {sym.name!r} at position {pos} declares arity "
                    f"{sym.arity}, table says {OP_TABLE[sym.name][0]}")
            if pos >= self.head_len and not sym.is_leaf():
                raise StructureError(
                    f"operator {sym.name!r} in tail at position {pos}")
        if max_arity is not None:
            expected = self.head_len * (max_arity - 1) + 1
            if self.tail_len != expected:
                raise StructureError(
                    f"tail length {self.tail_len} != {expected} required for "
                    f"head {self.head_len} and max arity {max_arity}")


@dataclass(frozen=True)
class ExprTree:
    """Immutable expression tree node."""

    node: Symbol
    children: tuple["ExprTree", ...] = ()

    def __post_init__(self):
        if self.node.kind == "op" and len(self.children) != self.node.arity:
            raise StructureError(
                f"operator {self.node.name!r} needs {self.node.arity} "
                f"children, got {len(self.children)}")
        if self.node.is_leaf() and self.children:
            raise StructureError("leaf node cannot have children")


def random_genotype(rng: np.random.Generator, config: GepConfig) -> Genotype:
    """Sample a genotype uniformly over the head/tail alphabets."""
    head_pool = config.symbols.head_symbols()
    tail_pool = config.symbols.leaf_symbols()
    head = [head_pool[int(i)] for i in rng.integers(len(head_pool),
                                                    size=config.head_len)]
    tail = [tail_pool[int(i)] for i in rng.integers(len(tail_pool),
                                                    size=config.tail_len)]
    return Genotype(symbols=tuple(head + tail), head_len=config.head_len)


def decode(genotype: Genotype) -> ExprTree:
    """Decode a genotype into its expression tree.

    Symbols are consumed left to right while the tree is built depth-first in
    pre-order: an operator at the cursor claims the next positions for its
    arguments before any sibling subtree starts.  Trailing symbols beyond the
    closed tree are silently unused (that slack is what makes every string
    decodable).
    """
    symbols = genotype.symbols
    head_len = genotype.head_len
    pos = 0

    def build() -> ExprTree:
        nonlocal pos
        if pos >= len(symbols):
            raise StructureError("genotype exhausted before the tree closed")
        sym = symbols[pos]
        if sym.kind == "op" and pos >= head_len:
            raise StructureError(
                f"operator {sym.name!r} in tail at position {pos}")
        pos += 1
        if sym.kind == "op":
            children = tuple(build() for _ in range(sym.arity))
            return ExprTree(sym, children)
        return ExprTree(sym)

    return build()


def preorder(tree: ExprTree) -> list[Symbol]:
    out = [tree.node]
    for child in tree.children:
        out.extend(preorder(child))
    return out


def eval_tree(tree: ExprTree, row: Mapping[str, float],
              pool: ConstantsPool | None = None):
    """Evaluate a tree on one input row (or on whole columns via broadcasting).

    Unknown terminal names raise KeyError; a constant reference without a
    pool raises ConfigurationError.  Arithmetic itself is never trapped, so
    overflow propagates as inf/nan for the caller to detect.
    """
    sym = tree.node
    if sym.kind == "term":
        try:
            return row[sym.name]
        except KeyError:
            raise KeyError(f"unknown terminal {sym.name!r}") from None
    if sym.kind == "lit":
        return sym.value
    if sym.kind == "const":
        if pool is None:
            raise ConfigurationError(
                "tree references a constant but no pool was given")
        try:
            return pool.values[sym.index]
        except IndexError:
            raise ConfigurationError(
                f"constant index {sym.index} outside pool of "
                f"size {len(pool)}") from None
    fn = OP_TABLE[sym.name][1]
    args = [eval_tree(child, row, pool) for child in tree.children]
    with np.errstate(all="ignore"):
        return fn(*args)


# ---------------------------------------------------------------------------
# Canonical polynomial form


def _poly_merge(left: dict, right: dict, sign: float) -> dict:
    out = dict(left)
    for mono, coeff in right.items():
        new = out.get(mono, 0.0) + sign * coeff
        if new == 0.0:
            out.pop(mono, None)
        else:
            out[mono] = new
    return out


def _poly_mul(left: dict, right: dict) -> dict:
    out: dict[tuple[str, ...], float] = {}
    for m1, c1 in left.items():
        for m2, c2 in right.items():
            mono = tuple(sorted(m1 + m2))
            new = out.get(mono, 0.0) + c1 * c2
            if new == 0.0:
                out.pop(mono, None)
            else:
                out[mono] = new
    return out


def tree_polynomial(tree: ExprTree,
                    pool: ConstantsPool | None = None) -> dict[tuple[str, ...], float]:
    """Expand a ring-op tree into a monomial -> coefficient map.

    Monomials are sorted tuples of variable names (with multiplicity), the
    empty tuple holding the constant term.  When no pool is given, constant
    references stay opaque as pseudo-variables "c<i>" so structurally equal
    expressions still compare equal.
    """
    sym = tree.node
    if sym.kind == "term":
        return {(sym.name,): 1.0}
    if sym.kind == "lit":
        return {(): float(sym.value)} if sym.value != 0.0 else {}
    if sym.kind == "const":
        if pool is None:
            return {(f"c{sym.index}",): 1.0}
        value = float(pool.values[sym.index])
        return {(): value} if value != 0.0 else {}
    parts = [tree_polynomial(child, pool) for child in tree.children]
    if sym.name == "+":
        return _poly_merge(parts[0], parts[1], 1.0)
    if sym.name == "-":
        return _poly_merge(parts[0], parts[1], -1.0)
    if sym.name == "neg":
        return {m: -c for m, c in parts[0].items()}
    if sym.name == "*":
        return _poly_mul(parts[0], parts[1])
    raise StructureError(f"operator {sym.name!r} is not a ring operation")


def polynomial_key(poly: Mapping[tuple[str, ...], float]) -> str:
    """Render a polynomial as a canonical, hashable string."""
    if not poly:
        return "0"
    terms = []
    for mono in sorted(poly):
        coeff = poly[mono]
        if not mono:
            terms.append(repr(coeff))
        elif coeff == 1.0:
            terms.append("*".join(mono))
        else:
            terms.append(repr(coeff) + "*" + "*".join(mono))
    return " + ".join(terms)


def canonical_key(tree: ExprTree, pool: ConstantsPool | None = None) -> str:
    """Canonical phenotype key: two trees share a key iff they are the same
    polynomial, hence the same function on every input."""
    return polynomial_key(tree_polynomial(tree, pool))


def polynomial_eval(poly: Mapping[tuple[str, ...], float],
                    columns: Mapping[str, np.ndarray]) -> np.ndarray:
    """Evaluate a polynomial on named columns, vectorized over rows."""
    names = list(columns)
    if not names:
        raise ValueError("no columns to evaluate on")
    length = len(np.asarray(columns[names[0]], dtype=float))
    total = np.zeros(length, dtype=float)
    with np.errstate(all="ignore"):
        for mono, coeff in poly.items():
            term = np.full(length, float(coeff))
            for var in mono:
                try:
                    term = term * np.asarray(columns[var], dtype=float)
                except KeyError:
                    raise KeyError(f"unknown terminal {var!r}") from None
            total = total + term
    return total


def parse_expression(text: str) -> ExprTree:
    """Parse '+', '-', '*', unary minus, names, and numbers into a tree.

    Used for reference model expressions written in configuration files.
    Anything beyond ring arithmetic (division, calls, powers) is rejected.
    """
    try:
        root = ast.parse(text, mode="eval").body
    except SyntaxError as exc:
        raise ExpressionSyntaxError(f"cannot parse expression: {exc}") from None

    binops = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*"}

    def convert(node: ast.AST) -> ExprTree:
        if isinstance(node, ast.BinOp) and type(node.op) in binops:
            name = binops[type(node.op)]
            return ExprTree(op_symbol(name),
                            (convert(node.left), convert(node.right)))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return ExprTree(op_symbol("neg"), (convert(node.operand),))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.UAdd):
            return convert(node.operand)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return ExprTree(literal(float(node.value)))
        if isinstance(node, ast.Name):
            return ExprTree(terminal(node.id))
        raise ExpressionSyntaxError(
            f"unsupported syntax {type(node).__name__} in expression {text!r}")

    return convert(root)


# ---------------------------------------------------------------------------
# Variation operators


def mutate(genotype: Genotype, rate: float, rng: np.random.Generator,
           symbols: SymbolSet) -> Genotype:
    """Point mutation: each slot flips with probability `rate` to a symbol
    legal at that position, so head/tail structure is preserved."""
    head_pool = symbols.head_symbols()
    tail_pool = symbols.leaf_symbols()
    flips = rng.random(len(genotype.symbols)) < rate
    out = list(genotype.symbols)
    for pos in np.flatnonzero(flips):
        pool = head_pool if pos < genotype.head_len else tail_pool
        out[pos] = pool[int(rng.integers(len(pool)))]
    return Genotype(symbols=tuple(out), head_len=genotype.head_len)


def crossover(a: Genotype, b: Genotype,
              rng: np.random.Generator) -> tuple[Genotype, Genotype]:
    """One-point crossover at a shared cut position."""
    if len(a.symbols) != len(b.symbols) or a.head_len != b.head_len:
        raise StructureError("crossover requires identically shaped genotypes")
    cut = int(rng.integers(1, len(a.symbols)))
    child_a = a.symbols[:cut] + b.symbols[cut:]
    child_b = b.symbols[:cut] + a.symbols[cut:]
    return (Genotype(symbols=child_a, head_len=a.head_len),
            Genotype(symbols=child_b, head_len=b.head_len))


# ---------------------------------------------------------------------------
# Population container and NSGA-II machinery


@dataclass
class Candidate:
    """One population member: a tuple of genotypes (one per model slot) plus
    its evaluation state."""

    genotypes: tuple[Genotype, ...]
    generation: int
    id: int
    phenotype_keys: tuple[str, ...] = ()
    embedding: np.ndarray | None = None
    embedding_norm: np.ndarray | None = None
    objectives: np.ndarray | None = None
    converged: bool = True
    provenance: str = ""

    def objective_vector(self) -> np.ndarray:
        if self.objectives is None:
            raise ValueError(f"candidate {self.id} has no objectives yet")
        return np.asarray(self.objectives, dtype=float)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Pareto dominance for minimization: a is nowhere worse and somewhere
    strictly better."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_nondominated_sort(objectives: np.ndarray) -> list[list[int]]:
    """Sort rows of an (n, p) objective matrix into Pareto fronts.

    Returns a list of fronts, each a list of row indices; front 0 is the
    non-dominated set.  Minimization throughout.
    """
    objs = np.asarray(objectives, dtype=float)
    n = objs.shape[0]
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(objs[i], objs[j]):
                dominated_by[i].append(j)
                domination_count[j] += 1
            elif dominates(objs[j], objs[i]):
                dominated_by[j].append(i)
                domination_count[i] += 1
    fronts: list[list[int]] = []
    current = [i for i in range(n) if domination_count[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                domination_count[j] -= 1
                if domination_count[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    """Crowding distance within one front; boundary points get +inf."""
    objs = np.asarray(objectives, dtype=float)
    n, p = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(p):
        order = np.argsort(objs[:, k], kind="stable")
        col = objs[order, k]
        span = col[-1] - col[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def _is_sentinel_row(row: np.ndarray) -> bool:
    return bool(np.any(row >= DIVERGENCE_SENTINEL) or not np.all(np.isfinite(row)))


def rank_population(population: Sequence[Candidate]) -> list[tuple[int, float]]:
    """Assign (front rank, crowding distance) per candidate.

    Sentinel-carrying candidates are pushed into one final front behind all
    finite fronts, so a diverged model can never shadow a finite one even if
    its raw sentinel vector would be non-dominated.
    """
    if not population:
        return []
    objs = np.array([c.objective_vector() for c in population], dtype=float)
    sentinel_mask = np.array([_is_sentinel_row(row) for row in objs])
    finite_idx = np.flatnonzero(~sentinel_mask)
    ranks: list[tuple[int, float]] = [(0, 0.0)] * len(population)
    n_fronts = 0
    if finite_idx.size:
        fronts = fast_nondominated_sort(objs[finite_idx])
        n_fronts = len(fronts)
        for rank, front in enumerate(fronts):
            members = finite_idx[front]
            dists = crowding_distance(objs[members])
            for local, idx in enumerate(members):
                ranks[idx] = (rank, float(dists[local]))
    sentinel_idx = np.flatnonzero(sentinel_mask)
    if sentinel_idx.size:
        for idx in sentinel_idx:
            ranks[idx] = (n_fronts, 0.0)
    return ranks


def _tournament_pick(ranked: Sequence[tuple[Candidate, tuple[int, float]]],
                     rng: np.random.Generator) -> Candidate:
    i, j = rng.integers(len(ranked), size=2)
    (cand_i, (rank_i, crowd_i)) = ranked[int(i)]
    (cand_j, (rank_j, crowd_j)) = ranked[int(j)]
    if rank_i < rank_j:
        return cand_i
    if rank_j < rank_i:
        return cand_j
    if crowd_i > crowd_j:
        return cand_i
    if crowd_j > crowd_i:
        return cand_j
    return cand_i if i <= j else cand_j


def evolve_generation(population: Sequence[Candidate],
                      ranks: Sequence[tuple[int, float]],
                      rng: np.random.Generator,
                      config: GepConfig,
                      n_offspring: int,
                      first_id: int,
                      generation: int) -> list[Candidate]:
    """Produce n_offspring children by binary tournament on (rank, crowding),
    one-point crossover per slot, then point mutation.

    Returned candidates are unevaluated; ids run consecutively from first_id.
    """
    if not population:
        raise ValueError("cannot evolve an empty population")
    if len(population) != len(ranks):
        raise ValueError("ranks must align with the population")
    ranked = list(zip(population, ranks))
    offspring: list[Candidate] = []
    next_id = first_id
    while len(offspring) < n_offspring:
        parent_a = _tournament_pick(ranked, rng)
        parent_b = _tournament_pick(ranked, rng)
        slots_a, slots_b = [], []
        for ga, gb in zip(parent_a.genotypes, parent_b.genotypes):
            if rng.random() < config.crossover_rate:
                ca, cb = crossover(ga, gb, rng)
            else:
                ca, cb = ga, gb
            slots_a.append(mutate(ca, config.mutation_rate, rng, config.symbols))
            slots_b.append(mutate(cb, config.mutation_rate, rng, config.symbols))
        for slots in (slots_a, slots_b):
            if len(offspring) >= n_offspring:
                break
            offspring.append(Candidate(genotypes=tuple(slots),
                                       generation=generation, id=next_id))
            next_id += 1
    return offspring


def select_survivors(population: Sequence[Candidate], mu: int) -> list[Candidate]:
    """NSGA-II truncation: fill whole fronts, split the last by crowding."""
    if mu <= 0:
        raise ValueError("survivor count must be positive")
    if len(population) <= mu:
        return list(population)
    ranks = rank_population(population)
    order = sorted(range(len(population)),
                   key=lambda i: (ranks[i][0], -ranks[i][1], population[i].id))
    return [population[i] for i in order[:mu]]
