"""Power of T* and L* for three planted shapes on a 32x32 lattice."""
from _common import parser, run

REFERENCE = {  # published power at rho = 0.2, 0.4
    ("rect:10x10", "T*"): (0.16, 0.42), ("rect:10x10", "L*"): (0.04, 0.20),
    ("ellipse:6.36x4.94", "T*"): (0.25, 0.60), ("ellipse:6.36x4.94", "L*"): (0.03, 0.51),
    ("triangle:10x20", "T*"): (0.21, 0.58), ("triangle:10x20", "L*"): (0.03, 0.26),
}

if __name__ == "__main__":
    args = parser(__doc__).parse_args()
    table, out = run("table1", args)
    print(f"{'shape':<20}{'method':<7}{'rho':>5}{'power':>8}{'ref':>7}")
    for (shape, m), ref in REFERENCE.items():
        for rho, r in zip((0.2, 0.4), ref):
            print(f"{shape:<20}{m:<7}{rho:>5}{table.power(shape=shape, rho=rho, method=m):>8.3f}{r:>7.2f}")
    print(f"wrote {out}")
