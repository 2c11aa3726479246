"""Bounded machine-checks of the semantic correspondence and its invariants.

Every check here explores executions exhaustively up to a depth, so a pass
is evidence at that depth, not a proof.  The checks:

- correspondence: the interleaving and thread-local semantics simulate each
  other step-for-step on race-free programs, related by the extraction map;
- version invariants: write counters are bounded by the number of prior
  writes, exact immediately after a write, maximal at every access, all
  reachable states are admissible, and owned projections agree between the
  two semantics;
- local abstraction: the per-instruction transfer of the location-indexed
  environment-set analysis dominates the thread-local collecting transfer
  through the abstraction that gathers thread environments per location
  (checked for both variable- and region-granular mixes).

Step functions are injectable so the test suite can verify that each check
catches a deliberately broken semantics.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable, Optional

from .concrete import (
    DEFAULT_BUDGET,
    DEFAULT_HAVOC,
    ProgramIndex,
    StdState,
    find_data_races,
    initial_state,
    std_step,
)
from .lang import (
    Acquire,
    Assign,
    Assume,
    Instruction,
    Program,
    RegionMap,
    Release,
    desugar,
    eval_bool,
    eval_expr,
    havoc_slots,
    parse_program,
    vars_of_bool,
    vars_of_expr,
)
from .threadlocal import (
    InadmissibleStateError,
    LocalContext,
    ThreadLocalState,
    extract_state,
    initial_local_state,
    is_admissible,
    local_step,
)


class PreconditionError(Exception):
    """The program races within the bound; the thread-local correspondence
    only holds for race-free programs, so the check refuses to run."""


@dataclass
class CheckResult:
    name: str
    instances: int = 0
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def fail(self, witness: str, explanation: str, cap: int = 20) -> None:
        if len(self.violations) < cap:
            self.violations.append((witness, explanation))

    def summary(self) -> str:
        status = "pass" if self.passed else f"FAIL ({len(self.violations)} violations)"
        return f"{self.name}: {self.instances} instances, {status}"


def _require_race_free(p: Program, depth: int, havoc_values, budget) -> None:
    races = find_data_races(p, depth, havoc_values, budget)
    if races:
        r = races[0]
        raise PreconditionError(
            f"data race on {r.subject!r} within depth {depth}; "
            f"the correspondence checks assume race freedom"
        )


def _fmt_trace(steps) -> str:
    return " ".join(f"{tr.instr.source}->{tr.instr.target}" for tr in steps)


# ---------------------------------------------------------------------------
# Correspondence (mutual step simulation through the extraction map)


def check_correspondence(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
    local_step_fn: Optional[Callable] = None,
    skip_precondition: bool = False,
) -> CheckResult:
    """Replay every bounded interleaving execution in the thread-local
    semantics and vice versa, demanding exact extraction-map agreement."""
    if not skip_precondition:
        _require_race_free(p, depth, havoc_values, budget)
    step_local = local_step_fn or local_step
    ctx = LocalContext(p)
    idx = ProgramIndex(p)
    result = CheckResult("correspondence")

    # completeness direction: standard execution -> thread-local replay
    def fwd(s: StdState, sigma: ThreadLocalState, steps: list, length: int) -> None:
        if length >= depth:
            return
        for tid, t in enumerate(p.threads):
            for instr in t.instructions:
                if instr.source != s.pc[tid]:
                    continue
                for choices, s2 in std_step(p, s, instr, havoc_values, idx):
                    result.instances += 1
                    steps.append((instr, choices))
                    here = " ".join(f"{i.source}->{i.target}" for i, _ in steps)
                    try:
                        match = [
                            post for ch, post
                            in step_local(p, sigma, instr, havoc_values, ctx)
                            if ch == choices
                        ]
                        if not match:
                            result.fail(here, "standard step has no thread-local counterpart")
                        elif extract_state(p, match[0], ctx) != s2:
                            result.fail(here, "extraction differs from the standard state")
                        else:
                            fwd(s2, match[0], steps, length + 1)
                    except InadmissibleStateError as e:
                        result.fail(here, f"admissibility broken: {e}")
                    steps.pop()

    # soundness direction: thread-local execution -> standard validity
    def bwd(sigma: ThreadLocalState, steps: list, length: int) -> None:
        if length >= depth:
            return
        try:
            s = extract_state(p, sigma, ctx)
        except InadmissibleStateError as e:
            result.fail(" ".join(f"{i.source}->{i.target}" for i, _ in steps),
                        f"admissibility broken: {e}")
            return
        for tid, t in enumerate(p.threads):
            for instr in t.instructions:
                if instr.source != sigma.pc[tid]:
                    continue
                try:
                    successors = step_local(p, sigma, instr, havoc_values, ctx)
                except InadmissibleStateError as e:
                    result.fail(" ".join(f"{i.source}->{i.target}" for i, _ in steps),
                                f"admissibility broken: {e}")
                    continue
                for choices, sigma2 in successors:
                    result.instances += 1
                    steps.append((instr, choices))
                    here = " ".join(f"{i.source}->{i.target}" for i, _ in steps)
                    match = [
                        s2 for ch, s2 in std_step(p, s, instr, havoc_values, idx)
                        if ch == choices
                    ]
                    try:
                        if not match:
                            result.fail(
                                here, "thread-local step disabled in the standard semantics")
                        elif match[0] != extract_state(p, sigma2, ctx):
                            result.fail(here, "standard successor disagrees with extraction")
                        else:
                            bwd(sigma2, steps, length + 1)
                    except InadmissibleStateError as e:
                        result.fail(here, f"admissibility broken: {e}")
                    steps.pop()

    fwd(initial_state(p), initial_local_state(p, ctx), [], 0)
    bwd(initial_local_state(p, ctx), [], 0)
    return result


# ---------------------------------------------------------------------------
# Version invariants


def check_version_invariants(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
    owned_depth: Optional[int] = None,
    local_step_fn: Optional[Callable] = None,
    skip_precondition: bool = False,
    owned_fn: Optional[Callable[[str, int], frozenset]] = None,
) -> list[CheckResult]:
    """Walk every bounded thread-local execution and assert the counter
    invariants; returns one result per sub-check."""
    if not skip_precondition:
        _require_race_free(p, depth, havoc_values, budget)
    step_local = local_step_fn or local_step
    ctx = LocalContext(p)
    var_count = len(p.variables)

    version_bound = CheckResult("version_bound")
    write_exact = CheckResult("write_version_exact")
    max_at_access = CheckResult("max_version_at_access")
    admissible = CheckResult("admissibility")
    owned_projection = CheckResult("owned_projection")
    results = [version_bound, write_exact, max_at_access, admissible, owned_projection]

    owned_cache: dict[tuple[str, int], frozenset] = {}

    def owned_at(thread: str, loc: int) -> frozenset:
        key = (thread, loc)
        if key not in owned_cache:
            if owned_fn is not None:
                owned_cache[key] = owned_fn(thread, loc)
            else:
                from .concrete import owned_vars_oracle

                owned_cache[key] = owned_vars_oracle(
                    p, thread, loc, owned_depth or depth, havoc_values, budget
                )
        return owned_cache[key]

    def components(sigma: ThreadLocalState):
        return sigma.theta + sigma.buffers

    def check_state(sigma: ThreadLocalState, writes: list[int], trace: str) -> None:
        version_bound.instances += 1
        for ve in components(sigma):
            for x in range(var_count):
                if ve.versions[x] > writes[x]:
                    version_bound.fail(
                        trace,
                        f"version of {p.variables[x]} is {ve.versions[x]} after "
                        f"{writes[x]} writes",
                    )
        admissible.instances += 1
        if not is_admissible(sigma):
            admissible.fail(trace, "inadmissible reachable state")
        owned_projection.instances += 1
        for tid, t in enumerate(p.threads):
            owned = owned_at(t.name, sigma.pc[tid])
            for v in owned:
                x = ctx.var_index[v]
                top = max(ve.versions[x] for ve in components(sigma))
                mine = sigma.theta[tid]
                if mine.versions[x] != top:
                    owned_projection.fail(
                        trace,
                        f"{t.name} owns {v} at {sigma.pc[tid]} but its version "
                        f"{mine.versions[x]} is not the maximum {top}",
                    )

    def walk(sigma: ThreadLocalState, writes: list[int], steps: list, length: int) -> None:
        if length >= depth:
            return
        for tid, t in enumerate(p.threads):
            for instr in t.instructions:
                if instr.source != sigma.pc[tid]:
                    continue
                cmd = instr.command
                reads = set()
                if isinstance(cmd, Assign):
                    reads = set(vars_of_expr(cmd.expr))
                elif isinstance(cmd, Assume):
                    reads = set(vars_of_bool(cmd.cond)) | set(instr.assert_reads)
                accessed = reads | ({cmd.var} if isinstance(cmd, Assign) else set())
                try:
                    successors = step_local(p, sigma, instr, havoc_values, ctx)
                except InadmissibleStateError as e:
                    admissible.fail(_fmt_trace_simple(steps + [instr]),
                                    f"admissibility broken: {e}")
                    continue
                for choices, sigma2 in successors:
                    steps.append(instr)
                    trace = _fmt_trace_simple(steps)
                    max_at_access.instances += 1
                    for v in accessed:
                        x = ctx.var_index[v]
                        top = max(ve.versions[x] for ve in components(sigma))
                        if sigma.theta[tid].versions[x] != top:
                            max_at_access.fail(
                                trace,
                                f"access of {v} with version "
                                f"{sigma.theta[tid].versions[x]} < max {top}",
                            )
                    if isinstance(cmd, Assign):
                        writes[ctx.var_index[cmd.var]] += 1
                        write_exact.instances += 1
                        x = ctx.var_index[cmd.var]
                        got = sigma2.theta[tid].versions[x]
                        if got != writes[x]:
                            write_exact.fail(
                                trace,
                                f"post-write version of {cmd.var} is {got}, "
                                f"expected {writes[x]}",
                            )
                    check_state(sigma2, writes, trace)
                    walk(sigma2, writes, steps, length + 1)
                    if isinstance(cmd, Assign):
                        writes[ctx.var_index[cmd.var]] -= 1
                    steps.pop()

    init = initial_local_state(p, ctx)
    check_state(init, [0] * var_count, "<initial>")
    walk(init, [0] * var_count, [], 0)
    return results


def _fmt_trace_simple(steps) -> str:
    return " ".join(f"{i.source}->{i.target}" for i in steps)


# ---------------------------------------------------------------------------
# Local consistent-abstraction check


LocEnvs = dict[int, frozenset]


def _alpha(p: Program, ctx: LocalContext, states: Iterable[ThreadLocalState]) -> LocEnvs:
    """Gather, per location, the thread environments of threads standing
    there and the buffer contents at post-release points."""
    out: dict[int, set] = {loc: set() for t in p.threads for loc in t.locations}
    for sigma in states:
        for tid in range(len(p.threads)):
            out[sigma.pc[tid]].add(sigma.theta[tid].values)
        for bi, loc in enumerate(ctx.buffer_points):
            out[loc].add(sigma.buffers[bi].values)
    return {loc: frozenset(envs) for loc, envs in out.items()}


def _mix_envs(envs: frozenset, partition) -> frozenset:
    if not envs:
        return frozenset()
    projections = []
    for region in partition:
        projections.append(sorted({tuple(env[i] for i in region) for env in envs}))
    out = set()
    n = max(max(r) for r in partition) + 1
    for combo in product(*projections):
        env = [0] * n
        for region, values in zip(partition, combo):
            for i, v in zip(region, values):
                env[i] = v
        out.add(tuple(env))
    return frozenset(out)


def _cartesian_transfer(
    p: Program,
    ctx: LocalContext,
    instr: Instruction,
    state: LocEnvs,
    partition,
    havoc_values,
    mix_fn=None,
) -> LocEnvs:
    """One application of the location-indexed environment-set transfer."""
    mix = mix_fn or _mix_envs
    out = {loc: set(envs) for loc, envs in state.items()}
    c = instr.command
    src = state.get(instr.source, frozenset())
    var_index = ctx.var_index
    if isinstance(c, Assign):
        vi = var_index[c.var]
        for env in src:
            env_map = {v: env[i] for v, i in var_index.items()}
            for choices in product(tuple(sorted(set(havoc_values))),
                                   repeat=havoc_slots(c.expr)):
                value = eval_expr(c.expr, env_map, choices)
                out[instr.target].add(
                    tuple(value if k == vi else x for k, x in enumerate(env)))
    elif isinstance(c, Assume):
        for env in src:
            env_map = {v: env[i] for v, i in var_index.items()}
            if eval_bool(c.cond, env_map):
                out[instr.target].add(env)
    elif isinstance(c, Release):
        out[instr.target] |= src
    elif isinstance(c, Acquire):
        pool = set(src)
        for loc in ctx.program.post_release_points(c.lock):
            pool |= state.get(loc, frozenset())
        out[instr.target] |= mix(frozenset(pool), partition)
    return {loc: frozenset(envs) for loc, envs in out.items()}


def check_local_abstraction(
    p: Program,
    samples: int,
    seed: int,
    depth: int = 8,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    regions: Optional[RegionMap] = None,
    budget: int = DEFAULT_BUDGET,
    mix_fn=None,
) -> CheckResult:
    """For sampled sets X of reachable thread-local states and every
    instruction: abstracting the post-set is below the abstract transfer of
    the abstracted pre-set.  With a RegionMap the region-granular semantics
    and mix are used; otherwise variable granularity."""
    ctx = LocalContext(p, regions=regions)
    if regions is None:
        partition = tuple((i,) for i in range(len(p.variables)))
    else:
        partition = regions.index_partition(p.variables)
    name = "local_abstraction" + ("_regions" if regions is not None else "")
    result = CheckResult(name)

    # deterministic reachable-state pool
    pool: list[ThreadLocalState] = []
    seen = set()
    frontier = [initial_local_state(p, ctx)]
    seen.add(frontier[0])
    pool.append(frontier[0])
    for _ in range(depth):
        nxt = []
        for sigma in frontier:
            for tid, t in enumerate(p.threads):
                for instr in t.instructions:
                    if instr.source != sigma.pc[tid]:
                        continue
                    for _, post in local_step(p, sigma, instr, havoc_values, ctx):
                        if post not in seen:
                            seen.add(post)
                            nxt.append(post)
                            pool.append(post)
        frontier = nxt
        if not frontier:
            break
        if len(pool) > budget:
            raise RuntimeError("state pool exceeded budget")

    rng = random.Random(seed)
    instructions = p.instructions
    for case in range(samples):
        k = rng.randint(1, min(6, len(pool)))
        X = rng.sample(pool, k)
        alpha_x = _alpha(p, ctx, X)
        for instr in instructions:
            post = []
            for sigma in X:
                for _, s2 in local_step(p, sigma, instr, havoc_values, ctx):
                    post.append(s2)
            result.instances += 1
            lhs = _alpha(p, ctx, post) if post else {}
            rhs = _cartesian_transfer(p, ctx, instr, alpha_x, partition,
                                      havoc_values, mix_fn=mix_fn)
            for loc, envs in lhs.items():
                if post and not envs <= rhs.get(loc, frozenset()):
                    missing = sorted(envs - rhs.get(loc, frozenset()))[:3]
                    result.fail(
                        f"case {case} instr {instr.source}->{instr.target}",
                        f"abstraction not dominated at {loc}: missing {missing}",
                    )
                    break
    return result


# ---------------------------------------------------------------------------
# Random race-free corpus


_TEMPLATE_EXPRS = (
    "{v} + 1",
    "{v} - 1",
    "{v} + {w}",
    "2 * {v}",
    "{w} - {v}",
    "havoc",
    "1",
)


def random_race_free_programs(
    count: int,
    seed: int,
    depth: int = 12,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
) -> list[tuple[str, Program]]:
    """Deterministically generate small 2-3 thread programs that are race
    free by construction (each variable is either private to one thread or
    only ever accessed inside critical sections of one lock), then double-
    check with the bounded race detector."""
    out = []
    attempt = 0
    while len(out) < count and attempt < count * 10:
        rng = random.Random(seed * 100_003 + attempt)
        attempt += 1
        n_threads = rng.choice((2, 2, 3))
        variables = ["a", "b", "c"][: rng.choice((2, 3))]
        discipline = {
            v: rng.choice(["private", "locked"]) for v in variables
        }
        if all(d == "private" for d in discipline.values()):
            discipline[variables[0]] = "locked"
        owner = {v: rng.randrange(n_threads) for v in variables}
        lines = ["var " + ", ".join(variables) + ";", "lock m;", ""]

        def expr_for(readable, rng):
            template = rng.choice(_TEMPLATE_EXPRS)
            v = rng.choice(readable) if readable else "1"
            w = rng.choice(readable) if readable else "1"
            return template.format(v=v, w=w)

        for tid in range(n_threads):
            body = []
            private = [v for v in variables
                       if discipline[v] == "private" and owner[v] == tid]
            locked = [v for v in variables if discipline[v] == "locked"]
            for _ in range(rng.randint(1, 2)):
                kind = rng.choice(["private", "locked", "locked"])
                if kind == "private" and private:
                    v = rng.choice(private)
                    body.append(f"  {v} := {expr_for(private, rng)};")
                elif locked:
                    stmts = [
                        f"  {rng.choice(locked)} := "
                        f"{expr_for(locked + private, rng)};"
                        for _ in range(rng.randint(1, 2))
                    ]
                    body.append("  acquire(m);")
                    body.extend(stmts)
                    body.append("  release(m);")
            if not body:
                body = ["  acquire(m);", "  release(m);"]
            lines.append(f"thread t{tid} {{")
            lines.extend(body)
            lines.append("}")
            lines.append("")
        source = "\n".join(lines)
        program = desugar(parse_program(source))
        if len(program.instructions) > 14:
            continue
        try:
            if find_data_races(program, depth, havoc_values, budget=200_000):
                continue
        except Exception:
            continue
        out.append((f"rand_{seed}_{attempt - 1}", program))
    return out
