"""One-line verdicts collected by the acceptance suite, printed at session end."""
LINES: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    LINES[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
