"""Per-criterion outcome lines collected by the acceptance suite."""

RESULTS: dict[int, list[tuple[bool, str]]] = {}
SOFT: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    RESULTS.setdefault(criterion, []).append((bool(ok), detail))


def lines() -> list[str]:
    out = []
    for crit in sorted(RESULTS):
        parts = RESULTS[crit]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        out.append(f"criterion {crit:2d}: {status}  " + "; ".join(d for _, d in parts))
    out += [f"soft target: {s}" for s in SOFT]
    return out
