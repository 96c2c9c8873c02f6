ACCEPTANCE = {}
CRITERIA = {
    1: "Laplacian trace identity",
    2: "contrastive equivalence",
    3: "triplet equivalence",
    4: "triplet count on coincident batch",
    5: "gradient fidelity",
    6: "Laplacian structure",
    7: "ablation ordering (joint vs softmax)",
    8: "retrieval metric correctness",
    9: "training determinism",
    10: "mutation canary",
}


def pytest_configure(config):
    config._lapembed_acceptance = ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n not in ACCEPTANCE:
            terminalreporter.write_line(f"[----] {n:>2}. {name}: not run")
            continue
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {name}: {detail}")
