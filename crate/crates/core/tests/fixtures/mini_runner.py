"""Minimal protocol-conformant runner used by the verifier tests.

It executes code and assertions in a fresh namespace per frame but does not
enforce timeouts itself; the supervisor's deadline handles nontermination.
"""
import json
import sys
import time


def run(frame):
    started = time.monotonic()
    namespace = {"__name__": "__candidate__"}
    try:
        exec(compile(frame["code"], "<candidate>", "exec"), namespace)
        for assertion in frame["assertions"]:
            try:
                exec(compile(assertion, "<assertion>", "exec"), namespace)
            except AssertionError:
                return "fail", assertion, started
    except BaseException as exc:  # noqa: BLE001
        return "error", f"{type(exc).__name__}: {exc}", started
    return "pass", "", started


def main():
    sys.setrecursionlimit(2000)
    print(json.dumps({"ready": True, "protocol": 1}), flush=True)
    for line in sys.stdin:
        if not line.strip():
            continue
        frame = json.loads(line)
        kind, detail, started = run(frame)
        print(
            json.dumps(
                {
                    "id": frame["id"],
                    "kind": kind,
                    "detail": detail,
                    "duration_ms": int((time.monotonic() - started) * 1000),
                }
            ),
            flush=True,
        )


if __name__ == "__main__":
    main()
