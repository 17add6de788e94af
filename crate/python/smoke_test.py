"""Smoke test for the Python bindings.

Run after `pip install -e . --no-build-isolation` from the repository root.
"""

import math

import numpy as np

import icmor

EXACT = math.sqrt(1.0 / 12.0)


def scalar_estimate():
    fom = icmor.LtiSystem.scalar(-1.0, 1.0, 1.0)
    rom = icmor.ReducedModel(np.array([[-2.0]]), np.array([[1.0]]), np.array([[1.0]]), np.array([1.0]))
    est = icmor.Estimator(fom, rom, gramian="dense").estimate(np.array([1.0]))
    err = icmor.output_error(fom, rom)
    assert abs(est["delta"] - EXACT) < 1e-8, est
    assert abs(err - EXACT) < 1e-8, err
    return est["delta"], err


def balanced_truncation_estimate():
    sys = icmor.random_stable_system(30, inputs=2, outputs=2, seed=7)
    rom, report = icmor.balanced_truncation(sys, 6, gramian="dense")
    assert report["hurwitz"]
    x0 = np.linspace(-1.0, 1.0, sys.state_dim)
    delta = icmor.Estimator(sys, rom, gramian="dense").estimate(x0)["delta"]
    err = icmor.output_error(sys.with_x0(x0), rom.with_x0(x0))
    assert abs(delta - err) <= 1e-6 * err, (delta, err)
    return delta, err


def experiment_summary():
    csv = icmor.run_experiment_toml(icmor.scalar_demo_config())
    header, row = csv.strip().splitlines()
    fields = dict(zip(header.split(","), row.split(",")))
    assert abs(float(fields["delta"]) - EXACT) < 1e-8, fields
    return fields["delta"]


if __name__ == "__main__":
    print("scalar: delta=%.12f error=%.12f" % scalar_estimate())
    print("random BT: delta=%.6e error=%.6e" % balanced_truncation_estimate())
    print("scalar experiment: delta=%s" % experiment_summary())
    print("ok")
