from maxplus_hjb.properties import (gap_instance_values, hamiltonian_suite, maxplus_suite, problem_suite,
                                    property_suite)


def test_hamiltonian_suite_small():
    rep = hamiltonian_suite(500, seed=3)
    assert rep.passed, rep.failures[:3]
    assert all(v > 0 for k, v in rep.counts.items() if k != "attained")


def test_negative_control_is_caught():
    rep = hamiltonian_suite(300, seed=3, inject_fault=True)
    assert not rep.passed
    assert {f["property"] for f in rep.failures} == {"K_le_H"}


def test_problem_and_maxplus_suites():
    assert problem_suite(200, seed=1).passed
    rep = maxplus_suite(seed=2)
    assert rep.passed and rep.counts["tower"] > 10


def test_gap_instance_values():
    assert gap_instance_values() == (0.0, 0.5)


def test_combined_report_serializable():
    rep = property_suite(seed=0, n_instances=100)
    d = rep.as_dict()
    assert d["passed"] and "hamiltonian.K_le_H" in d["counts"]
    assert d["extras"]["hamiltonian"]["gap_instance"]["strict"]
