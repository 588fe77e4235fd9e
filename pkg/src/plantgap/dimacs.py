"""DIMACS CNF reading/writing for planted instances.

Each clause line is the CNF clause falsified exactly by the stored disallowed
pattern. Plants and the penalty travel in comment lines so that plain SAT
tools still see an ordinary CNF::

    c plant 0000000000
    c penalty 1 2 3 0 0 0 0.5
"""

from __future__ import annotations

from .sat_instance import PENALTY_WEIGHT, Clause, Instance, PenaltyTerm


class DimacsParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def to_dimacs(instance: Instance) -> str:
    lines = []
    for z in instance.plants:
        lines.append("c plant " + "".join(str(b) for b in z))
    if instance.penalty is not None:
        p = instance.penalty
        lines.append(
            "c penalty {} {} {} {} {} {} {:g}".format(*p.bits, *p.target_pattern, p.weight)
        )
    lines.append(f"p cnf {instance.n} {instance.m}")
    for c in instance.clauses:
        lines.append(" ".join(str(l) for l in c.to_cnf()) + " 0")
    return "\n".join(lines) + "\n"


def _clause_from_literals(lits: list[int], lineno: int) -> Clause:
    if len(lits) != 3:
        raise DimacsParseError(lineno, f"expected 3 literals, got {len(lits)}")
    bits = tuple(abs(l) for l in lits)
    pattern = tuple(1 if l < 0 else 0 for l in lits)
    try:
        return Clause(bits, pattern)
    except ValueError as exc:
        raise DimacsParseError(lineno, str(exc)) from None


def from_dimacs(text: str) -> Instance:
    n = m = None
    clauses: list[Clause] = []
    plants: list[tuple[int, ...]] = []
    penalty = None
    pending: list[int] = []
    last_lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        last_lineno = lineno
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            parts = line.split()
            if len(parts) >= 2 and parts[1] == "plant":
                if len(parts) != 3 or set(parts[2]) - {"0", "1"}:
                    raise DimacsParseError(lineno, "malformed plant line")
                plants.append(tuple(int(ch) for ch in parts[2]))
            elif len(parts) >= 2 and parts[1] == "penalty":
                if len(parts) != 9:
                    raise DimacsParseError(lineno, "malformed penalty line")
                try:
                    bits = tuple(int(x) for x in parts[2:5])
                    pat = tuple(int(x) for x in parts[5:8])
                    weight = float(parts[8])
                except ValueError:
                    raise DimacsParseError(lineno, "non-numeric penalty field") from None
                if weight != PENALTY_WEIGHT:
                    raise DimacsParseError(lineno, f"penalty weight must be {PENALTY_WEIGHT}")
                penalty = PenaltyTerm(bits, pat, weight)
            continue
        if line.startswith("p"):
            parts = line.split()
            if n is not None or len(parts) != 4 or parts[1] != "cnf":
                raise DimacsParseError(lineno, "bad problem line")
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsParseError(lineno, "bad problem line") from None
            continue
        if n is None:
            raise DimacsParseError(lineno, "clause before 'p cnf' header")
        try:
            lits = [int(tok) for tok in line.split()]
        except ValueError:
            raise DimacsParseError(lineno, "non-integer literal") from None
        for lit in lits:
            if lit == 0:
                clauses.append(_clause_from_literals(pending, lineno))
                pending = []
            elif abs(lit) > n:
                raise DimacsParseError(lineno, f"variable {abs(lit)} exceeds n={n}")
            else:
                pending.append(lit)
    if n is None:
        raise DimacsParseError(last_lineno, "missing 'p cnf' header")
    if pending:
        raise DimacsParseError(last_lineno, "unterminated clause")
    if len(clauses) != m:
        raise DimacsParseError(last_lineno, f"header declares {m} clauses, found {len(clauses)}")
    for z in plants:
        if len(z) != n:
            raise DimacsParseError(last_lineno, "plant length does not match n")
    return Instance(n, tuple(clauses), tuple(plants), penalty)


def read_instance(path) -> Instance:
    with open(path) as fh:
        return from_dimacs(fh.read())


def write_instance(instance: Instance, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(to_dimacs(instance))
