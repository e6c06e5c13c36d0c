"""Smoke test for the qpspec extension module.

Build and install the wheel first:

    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/qpspec-*.whl
"""

import math

import qpspec


def main():
    amo = qpspec.Family.amo(3.0)
    assert amo.d == 1 and amo.degree == 1
    assert abs(amo.omega - (math.sqrt(5) - 1) / 2) < 1e-15

    again = qpspec.Family.from_json(amo.to_json())
    assert again.to_json() == amo.to_json()

    assert qpspec.symplectic_defect_at(amo, 0.7, 0.3) < 1e-12

    e0 = qpspec.nearest_eigenvalue(amo, 0.0, 128, 0.0)
    le = qpspec.lyapunov_exponents(amo, e0, n=256, grid=200)
    top = le["exponents"][0]
    assert abs(top + le["exponents"][1]) < 1e-8
    assert abs(top - math.log(3.0)) < 0.05, top

    acc = qpspec.acceleration(amo, e0, n=400, grid=200)
    assert acc[0]["kappa_rounded"] == 1, acc

    rep = qpspec.zero_count(amo, e0, 32)
    assert rep["count"] == 64, rep

    assert qpspec.detp_residual(amo, 0.2, complex(0.4, 0.0), 16, eps=0.01) < 1e-7
    log_mag, phase = qpspec.dirichlet_det(amo, 0.2, complex(0.4, 0.1), 16)
    assert math.isfinite(log_mag) and abs(abs(phase) - 1.0) < 1e-12

    block = qpspec.Family.block_demo(3.0, 0.5, 0.3)
    assert block.d == 2
    assert qpspec.detp_residual(block, 0.1, complex(0.3, 0.0), 8) < 1e-7

    ids = qpspec.ids_estimate(amo, 0.0, 0.0, 500)
    assert 0.0 <= ids <= 1.0
    w = qpspec.window_count(amo, 0.0, e0, 1e-2, 500)
    assert w["count"] <= w["resolvent_estimate"]

    etas = [1e-2 * 0.5 ** k for k in range(6)]
    slope, rms, dropped = qpspec.fit_power_law(etas, [(2 * h) ** 0.75 for h in etas])
    assert abs(slope - 0.75) < 1e-12 and rms < 1e-12 and not dropped

    cert = qpspec.diophantine_certificate(k_max=10_000)
    assert cert["a"] > 0.3
    scales = qpspec.admissible_scales(count=10)
    assert len(scales["scales"]) == 10

    try:
        qpspec.zero_count(amo, e0, 16, eps_half=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("annulus outside the strip accepted")

    print("qpspec", qpspec.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
