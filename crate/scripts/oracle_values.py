"""Independent reference values frozen into the Rust test suites.

Everything here is computed with mpmath at 30 significant digits, directly from
the defining integrals / finite sums, without sharing any code with the crate.
Run: python3 scripts/oracle_values.py
"""
import mpmath as mp

mp.mp.dps = 30


def show(label, z):
    z = mp.mpc(z)
    print(f"{label}: re={mp.nstr(z.real, 20)} im={mp.nstr(z.imag, 20)}")


# Single atom at y=1 with rate 1, xi = pi (atom outside the truncation interval).
show("psi atom(1,1) xi=pi", 1 - mp.exp(1j * mp.pi))

# Volatility flow: beta=1, log(delta)=-1, sigma^2=2, dt=1.
L = mp.mpf(-1)
s2 = (2 + 1 / L) * mp.exp(L) - 1 / L
print("evolve sigma2:", mp.nstr(s2, 20), "log:", mp.nstr(mp.log(s2), 20))

# Jump in log-variance, lambda/delta=0.5, dz=1.
print("jump dv:", mp.nstr(mp.log(1.5), 20))

# Symbol at v=0 for a single atom y=1 (rate 1), beta=1, delta=0.5, lambda=0.25, xi=(1,1).
beta, delta, lam = mp.mpf(1), mp.mpf("0.5"), mp.mpf("0.25")
z1, z2 = mp.mpf(1), mp.log(1 + lam / delta)
p = -1j * 1 * (beta + mp.log(delta)) - (mp.exp(1j * (z1 + z2)) - 1)
show("symbol atom y=1 xi=(1,1)", p)


# Single atom y=0.5 rate 2 at v=0 (mapped atom inside the unit square).
def cp_symbol(x1, x2, y=mp.mpf("0.5"), rate=2, v=0):
    s = mp.exp(mp.mpf(v) / 2)
    w1, w2 = s * y, mp.log(1 + lam / delta * y * y)
    inside = abs(w1) < 1 and abs(w2) < 1
    ind_y = abs(y) < 1
    d1 = s * rate * y * ((1 if inside else 0) - (1 if ind_y else 0))
    d2 = beta * mp.exp(-v) + mp.log(delta) + rate * w2 * (1 if inside else 0)
    th = w1 * x1 + w2 * x2
    jump = rate * (mp.exp(1j * th) - 1 - (1j * th if inside else 0))
    return -1j * x1 * d1 - 1j * x2 * d2 - jump


for x1, x2 in [(1, 0), (0, 1), (2, -1), (-2, 2), (1.5, 0.5)]:
    show(f"cp symbol xi=({x1},{x2})", cp_symbol(mp.mpf(x1), mp.mpf(x2)))


# Two-sided tempered stable density exp(-2|y|) |y|^{-1.5}, cutoffs +-30.
def ts(y):
    return mp.exp(-2 * abs(y)) * abs(y) ** mp.mpf("-1.5")


def psi_density(n, xi, lo, hi):
    f = lambda y: (mp.exp(1j * y * xi) - 1 - (1j * y * xi if abs(y) < 1 else 0)) * n(y)
    pts_neg = [lo, -1, 0]
    pts_pos = [0, 1, hi]
    return -(mp.quad(f, pts_neg) + mp.quad(f, pts_pos))


for xi in [0.5, 1, 3]:
    show(f"psi TS two-sided xi={xi}", psi_density(ts, mp.mpf(xi), -30, 30))
# Closed form cross-check (no cutoff): -Gamma(-a)[(G-i xi)^a + (G+i xi)^a - 2G^a]
for xi in [0.5, 1, 3]:
    a, G = mp.mpf("0.5"), 2
    show(f"psi TS closed xi={xi}", -mp.gamma(-a) * ((G - 1j * xi) ** a + (G + 1j * xi) ** a - 2 * G ** a))


# One-sided (positive jumps) gamma-like density 3 exp(-2y)/y on (0, 30].
def gam(y):
    return 3 * mp.exp(-2 * y) / y if y > 0 else mp.mpf(0)


for xi in [0.5, 2]:
    f = lambda y: (mp.exp(1j * y * xi) - 1 - (1j * y * xi if y < 1 else 0)) * gam(y)
    show(f"psi gamma xi={xi}", -mp.quad(f, [0, 1, 30]))
    closed = 3 * mp.log(1 - 1j * xi / 2) + 1j * xi * 3 * (1 - mp.exp(-2)) / 2
    show(f"psi gamma closed xi={xi}", closed)

# Truncated mass of the two-sided tempered stable density beyond eps=0.01.
mass = 2 * mp.quad(lambda y: mp.exp(-2 * y) * y ** mp.mpf("-1.5"), [0.01, 1, 30])
print("TS mass |y|>=0.01:", mp.nstr(mass, 20))
# Compensating drift over 0.01<=|y|<1 for the one-sided gamma density.
print("gamma drift comp:", mp.nstr(mp.quad(lambda y: y * gam(y), [0.01, 1]), 20))

# Brownian, lambda=0: Var(G_t) = int_0^t exp(V_s) ds with beta=1, delta=0.5, v0=0, t=1.
L = mp.log(mp.mpf("0.5"))
var = mp.quad(lambda s: (1 + 1 / L) * mp.exp(s * L) - 1 / L, [0, 1])
print("int sigma2 [0,1] beta=1 delta=.5 v0=0:", mp.nstr(var, 20))


# COGARCH symbol with the two-sided tempered stable driver above:
# l=0.1, Q=0.2, beta=1, delta=0.5, lambda=0.25, v=0.3.
def density_symbol(x1, x2, v=mp.mpf("0.3"), ell=mp.mpf("0.1"), Q=mp.mpf("0.2")):
    k = lam / delta
    s = mp.exp(v / 2)
    box = lambda y: abs(s * y) < 1 and abs(mp.log(1 + k * y * y)) < 1
    brk = sorted({mp.mpf(1), 1 / s, mp.sqrt((mp.e - 1) / k)})
    pos = [0] + brk + [30]
    neg = [-b for b in reversed(pos)]

    def q(f):
        return mp.quad(f, neg) + mp.quad(f, pos)

    b1 = s * (ell + q(lambda y: y * ((1 if box(y) else 0) - (1 if abs(y) < 1 else 0)) * ts(y)))
    b2 = beta * mp.exp(-v) + mp.log(delta) + q(lambda y: mp.log(1 + k * y * y) * (1 if box(y) else 0) * ts(y))

    def jump(y):
        z1, z2 = s * y, mp.log(1 + k * y * y)
        th = z1 * x1 + z2 * x2
        return (mp.exp(1j * th) - 1 - (1j * th if box(y) else 0)) * ts(y)

    return -1j * x1 * b1 - 1j * x2 * b2 + Q * x1 * x1 * mp.exp(v) / 2 - q(jump)


for x1, x2 in [(1, -0.5), (-2, 1.5)]:
    show(f"density cogarch symbol xi=({x1},{x2})", density_symbol(mp.mpf(x1), mp.mpf(x2)))
