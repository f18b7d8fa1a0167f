import pytest

from heatplan.ppo import PpoConfig, save_policy, train, write_curve_csv

# name -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def trained_policy(tmp_path_factory):
    """The desk-scale policy (500k steps, seed 0), trained once per session."""
    net, curve = train(PpoConfig(total_steps=500_000, rng_seed=0))
    d = tmp_path_factory.mktemp("policy")
    path = d / "policy.json"
    save_policy(net, path)
    write_curve_csv(curve, d / "curve.csv")
    return net, curve, path


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0][2:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
