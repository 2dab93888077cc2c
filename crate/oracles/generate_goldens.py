"""Independent high-precision oracles for the golden table.

Run from the repository root:  python3 oracles/generate_goldens.py
Writes oracles/goldens.csv (name,value,tolerance,oracle).
"""

import csv
import os

import mpmath as mp
import sympy as sp

mp.mp.dps = 50
rows = []


def add(name, value, tol, oracle):
    rows.append((name, mp.nstr(mp.mpf(value), 20, strip_zeros=False), repr(tol), oracle))


# cubic resolvent: y + 0.1 y^3 = 1, by bisection
lo, hi = mp.mpf(0), mp.mpf(1)
for _ in range(200):
    mid = (lo + hi) / 2
    if mid + mp.mpf("0.1") * mid**3 - 1 > 0:
        hi = mid
    else:
        lo = mid
ystar = (lo + hi) / 2
add("cubic_resolvent_eps0.1_r1", ystar, 1e-12, "bisection")
add("cubic_yosida_eps0.1_r1", (1 - ystar) / mp.mpf("0.1"), 1e-10, "bisection")
add("cubic_envelope_eps0.1_r1", ystar**4 / 4 + (1 - ystar) ** 2 / (2 * mp.mpf("0.1")), 1e-12, "bisection")

# logarithmic potential, theta = 1, theta_c = 2
s = mp.mpf("0.5")
add("log_value_s0.5", mp.mpf("0.5") * ((1 + s) * mp.log(1 + s) + (1 - s) * mp.log(1 - s)) + (1 - s**2), 1e-14, "mpmath")


def log_resolvent(r, eps, theta=1):
    lo, hi = mp.mpf(-1), mp.mpf(1)
    for _ in range(300):
        mid = (lo + hi) / 2
        if mid + eps * theta * mp.atanh(mid) - r > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


for r, eps in [("0.99", "0.1"), ("1.5", "0.25"), ("-3", "0.0625")]:
    r_, e_ = mp.mpf(r), mp.mpf(eps)
    j = log_resolvent(r_, e_)
    envelope = mp.mpf("0.5") * ((1 + j) * mp.log(1 + j) + (1 - j) * mp.log(1 - j)) + (r_ - j) ** 2 / (2 * e_)
    add(f"log_resolvent_eps{eps}_r{r}", j, 1e-12, "bisection")
    add(f"log_yosida_eps{eps}_r{r}", (r_ - j) / e_, 1e-9, "bisection")
    add(f"log_envelope_eps{eps}_r{r}", envelope, 1e-11, "bisection")

# least kappa1 at kappa2 = 1 over uniform samples
def grid(a, b, n):
    return [mp.mpf(a) + (mp.mpf(b) - mp.mpf(a)) * k / (n - 1) for k in range(n)]


k1 = max(max((abs(r) ** 3 - 1) / abs(mp.atanh(r)) for r in grid("-0.99", "0.99", 1000) if r != 0), 0)
add("kappa1_min_cubic_over_log", k1, 1e-12, "sample sweep on [-0.99,0.99]")
k1 = max((abs(mp.atanh(r)) - 1) / abs(r) ** 3 for r in grid("-0.999", "0.999", 1000) if r != 0)
add("kappa1_min_log_over_cubic", k1, 1e-9, "sample sweep on [-0.999,0.999]")

# surface H1 seminorm of sin(2 pi s / L) on the square boundary, L = 4
s_ = sp.symbols("s")
L = 4
add("surface_h1_sin_exact", sp.N(sp.integrate(sp.diff(sp.sin(2 * sp.pi * s_ / L), s_) ** 2, (s_, 0, L)), 40), 1e-3, "sympy integral; discrete value at n=64")

# planar interface (x - 1/2) + 0.2 (y - 1/2): angle between +x wall tangent and the level set into the domain
d = mp.matrix([-0.2, 1]) / mp.sqrt(mp.mpf("1.04"))
add("contact_angle_bottom", mp.degrees(mp.acos(d[0])), 1.0, "analytic")
add("contact_angle_top", mp.degrees(mp.acos(-d[0])), 1.0, "analytic")

# linearized growth rates, polynomial alpha = 20, unit mobility, modes cos(k pi x)
f2 = -20
for k in (1, 2):
    q = (k * mp.pi) ** 2
    add(f"spinodal_rate_k{k}", -q * (q + f2), 0.05, "dispersion relation (relative)")

# Brinkman manufactured body force -div(2 nu D v) + lambda v + grad p
x, y = sp.symbols("x y")
nu, lam = sp.Rational(3, 2), sp.Rational(1, 2)
v = sp.Matrix([sp.sin(sp.pi * x) * sp.cos(sp.pi * y), -sp.cos(sp.pi * x) * sp.sin(sp.pi * y)])
p = sp.cos(sp.pi * x) * sp.cos(sp.pi * y)
grad = v.jacobian([x, y])
D = (grad + grad.T) / 2
f = [sum(-sp.diff(2 * nu * D[i, j], [x, y][j]) for j in range(2)) + lam * v[i] + sp.diff(p, [x, y][i]) for i in range(2)]
# nu = 3/2, lambda = 1/2 at p1 = (1/3, 1/5), p2 = (7/10, 9/10)
for tag, (px, py) in [("p1", (sp.Rational(1, 3), sp.Rational(1, 5))), ("p2", (sp.Rational(7, 10), sp.Rational(9, 10)))]:
    for i, comp in enumerate("xy"):
        add(f"brinkman_force_{comp}_{tag}", sp.N(f[i].subs({x: px, y: py}), 40), 1e-12, "sympy")

out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "goldens.csv")
with open(out, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["name", "value", "tolerance", "oracle"])
    w.writerows(rows)
print(f"wrote {len(rows)} goldens to {out}")
