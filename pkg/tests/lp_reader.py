"""Reader for the emitted LP models, independent of the package's writer."""

import itertools
import math
import re

_TERM = re.compile(r"([+-])\s*([0-9.eE+-]+)\s+(\w+)")


def parse_lp(text):
    """Minimal reader for the emitted LP: objective, rows, bounds, binaries."""
    section, obj, rows, bounds, binaries = None, {}, [], {}, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        if line in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            section = line
            continue
        if section == "Minimize":
            body = line.split(":", 1)[1]
            for sign, coef, name in _TERM.findall(" " + body if body.strip()[0] in "+-"
                                                  else " + " + body):
                obj[name] = float(coef) * (-1 if sign == "-" else 1)
        elif section == "Subject To":
            _, body = line.split(":", 1)
            m = re.match(r"(.*?)(>=|<=|=)\s*(\S+)$", body.strip())
            lhs, sense, rhs = m.group(1), m.group(2), float(m.group(3))
            lhs = lhs.strip()
            first, rest = lhs.split(" ", 1) if " " in lhs else (lhs, "")
            terms = {first: 1.0}
            for sign, coef, name in _TERM.findall(" " + rest):
                terms[name] = terms.get(name, 0.0) + float(coef) * (-1 if sign == "-" else 1)
            rows.append((terms, sense, rhs))
        elif section == "Bounds":
            m = re.match(r"(\S+)\s*<=\s*(\w+)\s*<=\s*(\S+)", line)
            if m:
                bounds[m.group(2)] = (float(m.group(1)), float(m.group(3)))
        elif section == "Binaries":
            binaries.extend(line.split())
    return obj, rows, bounds, binaries


def lp_optimum_by_enumeration(text):
    """Enumerate the binaries; each continuous variable then has interval bounds."""
    obj, rows, bounds, binaries = parse_lp(text)
    best = math.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        fixed = dict(zip(binaries, bits))
        lo = {v: b[0] for v, b in bounds.items()}
        hi = {v: b[1] for v, b in bounds.items()}
        for terms, sense, rhs in rows:
            cont = [v for v in terms if v not in fixed]
            assert len(cont) == 1
            v = cont[0]
            a = terms[v]
            r = (rhs - sum(c * fixed[n] for n, c in terms.items() if n in fixed)) / a
            if (sense == ">=") == (a > 0):
                lo[v] = max(lo[v], r)
            else:
                hi[v] = min(hi[v], r)
        if any(lo[v] > hi[v] + 1e-12 for v in obj):
            continue
        total = math.fsum(c * (lo[v] if c > 0 else hi[v]) for v, c in obj.items())
        best = min(best, total)
    return best
