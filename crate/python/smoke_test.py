"""Quick end-to-end check of the Python bindings.

Build and install first, e.g. `pip install ./crates/python` or
`maturin develop -m crates/python/Cargo.toml`.
"""

import math
import sys

import fdris


def main():
    print("fdris", fdris.version())

    scenario = fdris.load_scenario(preset="paper-sec5", seed=1)
    assert scenario["system"]["carrier_hz"] == 28e9
    assert len(scenario["system"]["users"]) == 4

    re, im = fdris.harmonic_coefficient(1)
    assert abs(re - 1.0) < 1e-12 and abs(im) < 1e-12
    for z in (-2, 0, 2, 3):
        assert math.hypot(*fdris.harmonic_coefficient(z)) < 1e-10

    try:
        fdris.solve(scheme="nope")
    except ValueError as e:
        print("rejected bad scheme:", e)
    else:
        raise AssertionError("bad scheme accepted")

    zf = fdris.solve(scheme="zf", seed=1)
    assert zf["wsr"] > 0 and len(zf["rates"]) == 4
    power = sum(b[0] ** 2 + b[1] ** 2 for beam in zf["beams"] for b in beam)
    print(f"zf wsr {zf['wsr']:.4f}, power {power:.4f} W")

    ris = fdris.solve(scheme="ris", seed=1, max_iterations=30)
    trace = ris["trace_wsr"]
    assert all(b >= a - 1e-8 for a, b in zip(trace, trace[1:])), "trace not monotone"
    assert all(abs(math.hypot(*p) - 1.0) < 1e-9 for p in ris["phases"])
    print(f"ris wsr {ris['wsr']:.4f} after {ris['iterations']} iterations")

    pat = fdris.pattern(scheme="ris", seed=1, distances=(20.0, 100.0, 9), elevations=(0.0, 180.0, 13))
    assert len(pat["energy"]) == 9 and len(pat["energy"][0]) == 13
    print("pattern peaks:", pat["local_maxima"][:4])
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
