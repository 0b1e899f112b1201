"""Quick checks of the Python bindings; runs in well under a minute."""

import math
import os
import tempfile

import carrier


def main():
    k0, k1 = carrier.invariant_limits()
    assert abs(k0 - 3.0899651) < 1e-6, k0
    assert abs(carrier.action_integral(0.0, 1.0) - k0) < 1e-9
    assert k0 < k1

    eps_pitch, eps_asym = carrier.predict("pitchfork", 1)
    assert eps_pitch == eps_asym
    assert carrier.max_spikes(0.1) == math.floor(2 * carrier.phase_integral(k0, 0.0, 1.0) / 0.1)
    exact, asym = carrier.predict("fold", 2)
    assert exact is None and asym > eps_pitch / 2

    sol = carrier.solve(0.3, 1.0, n_nodes=401)
    assert max(abs(r) for r in sol.residual()) < 1e-8
    assert len(sol.x) == len(sol.values) == 401
    names = [n for n, _ in sol.functionals()]
    assert names == ["sup_norm", "h1_norm", "centre_value", "left_slope"]
    print(sol)

    # a short sweep through the first symmetry-breaking point
    result = carrier.sweep(eps_sq_start=0.225, eps_sq_end=0.215, step=1e-3, n_nodes=801)
    counts = [c for _, c in result.counts]
    assert counts[0] == 2 and counts[-1] == 4, counts
    kinds = [k for k, _, _ in result.events()]
    assert "pitchfork" in kinds
    eps, err = result.locate("pitchfork", 0, grids=[801, 1601])
    assert abs(eps - 0.46886251) < 1e-4, eps

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "db.jsonl")
        assert result.save(path) == "r0"
        csv = carrier.diagram_csv(path).splitlines()
        assert csv[0] == "eps_sq,functional_name,value,branch_id,component,M,symmetry,source"
        assert len(csv) > 1

    try:
        carrier.predict("cusp", 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown kind accepted")
    print("python bindings OK")


if __name__ == "__main__":
    main()
