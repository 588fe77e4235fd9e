"""Small deterministic DPLL solver used to certify planted instances.

Clauses are sequences of non-zero DIMACS literals over variables ``1..n``.
Branching always picks the lowest-index unassigned variable and tries the
value 0 (literal ``-v``) first; unit propagation runs after every decision.
No clause learning.
"""

from __future__ import annotations

from typing import Sequence


class SolverBudgetExceeded(RuntimeError):
    """Raised when the decision budget runs out before an answer."""


UNSAT = None


def dpll_solve(cnf: Sequence[Sequence[int]], n: int, max_decisions: int = 1_000_000):
    """Return a satisfying assignment as a tuple of 0/1 values, or ``None`` if UNSAT.

    Variables left unconstrained once every clause is satisfied are set to 0,
    so the empty CNF yields the all-zeros model.
    """
    clauses = [tuple(c) for c in cnf]
    for c in clauses:
        for lit in c:
            if lit == 0 or abs(lit) > n:
                raise ValueError(f"literal {lit} out of range for n={n}")
    if any(len(c) == 0 for c in clauses):
        return UNSAT

    # occ[lit] lists clauses containing lit; indexed as lit + n
    occ: list[list[int]] = [[] for _ in range(2 * n + 1)]
    for k, c in enumerate(clauses):
        for lit in set(c):
            occ[lit + n].append(k)

    value = [-1] * (n + 1)  # -1 unassigned, else 0/1
    trail: list[int] = []

    def lit_val(lit: int) -> int:
        v = value[abs(lit)]
        if v < 0:
            return -1
        return v if lit > 0 else 1 - v

    def assign(lit: int) -> None:
        value[abs(lit)] = 1 if lit > 0 else 0
        trail.append(abs(lit))

    def propagate(queue: list[int]) -> bool:
        # queue holds literals that just became true
        head = 0
        while head < len(queue):
            lit = queue[head]
            head += 1
            for k in occ[-lit + n]:
                unassigned = 0
                last = 0
                sat = False
                for l2 in clauses[k]:
                    lv = lit_val(l2)
                    if lv == 1:
                        sat = True
                        break
                    if lv < 0:
                        unassigned += 1
                        last = l2
                if sat:
                    continue
                if unassigned == 0:
                    return False
                if unassigned == 1:
                    assign(last)
                    queue.append(last)
        return True

    def undo(mark: int) -> None:
        while len(trail) > mark:
            value[trail.pop()] = -1

    # top-level units
    units = []
    for c in clauses:
        if len(set(c)) == 1:
            lit = c[0]
            lv = lit_val(lit)
            if lv == 0:
                return UNSAT
            if lv < 0:
                assign(lit)
                units.append(lit)
    if not propagate(units):
        return UNSAT

    decisions = 0
    # stack entries: (trail mark, variable, value tried)
    stack: list[tuple[int, int, int]] = []

    def next_var(start: int) -> int:
        for v in range(start, n + 1):
            if value[v] < 0:
                return v
        return 0

    var = next_var(1)
    while True:
        if var == 0:
            model = tuple(max(value[v], 0) for v in range(1, n + 1))
            return model
        decisions += 1
        if decisions > max_decisions:
            raise SolverBudgetExceeded(f"DPLL exceeded {max_decisions} decisions")
        mark = len(trail)
        stack.append((mark, var, 0))
        assign(-var)
        ok = propagate([-var])
        while not ok:
            # backtrack to the most recent decision whose value-1 branch is untried
            while stack and stack[-1][2] == 1:
                stack.pop()
            if not stack:
                return UNSAT
            mark, v, _ = stack.pop()
            undo(mark)
            stack.append((mark, v, 1))
            assign(v)
            ok = propagate([v])
        var = next_var(1)


def satisfies(cnf: Sequence[Sequence[int]], model: Sequence[int]) -> bool:
    """Check a 0/1 model (index 0 is variable 1) against every clause."""
    for c in cnf:
        if not any((model[abs(l) - 1] == 1) == (l > 0) for l in c):
            return False
    return True
