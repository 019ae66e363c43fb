"""Expected rewards of the two-builder reservation model by numerical
integration over the raw random variables (no closed forms).

X ~ exp(mean mu1) primary private flow, X' ~ exp(mean mu2) secondary private
flow, Y ~ exp(mean mu3) public flow. A reservation for round t+1 is made iff
X[t] > rho. Prints one line per point: the four expectations.
"""
import math
import sys

from scipy import integrate


def pdf(mean):
    return lambda x: math.exp(-x / mean) / mean


def rewards(mu2, mu3, rho, r1, r2):
    mu1 = 1.0 - mu2
    fx, fxp = pdf(mu1), pdf(mu2)
    a = math.exp(-rho / mu1)                      # P(X > rho)
    ex_above = integrate.quad(lambda x: x * fx(x), rho, math.inf)[0]
    ex_below = integrate.quad(lambda x: x * fx(x), 0, rho)[0]
    # E[1{X<=rho} 1{X>X'} X] and E[1{X<=rho} 1{X>X'}]
    win_x = integrate.quad(lambda x: x * fx(x) * (1 - math.exp(-x / mu2)), 0, rho)[0]
    win_p = integrate.quad(lambda x: fx(x) * (1 - math.exp(-x / mu2)), 0, rho)[0]
    # E[1{X<=rho} 1{X'>=X} X'] and probability
    lose_xp = integrate.quad(lambda x: fx(x) * (x + mu2) * math.exp(-x / mu2), 0, rho)[0]
    lose_p = integrate.quad(lambda x: fx(x) * math.exp(-x / mu2), 0, rho)[0]

    # Round t with R[t] = 1 (prob a): bundle X[t-1] | X[t-1] > rho.
    reserved_p = (1 - r1) * ex_above + a * (1 - r2) * ex_below + a * (1 - r2) * mu3
    # Round t with R[t] = 0: proposer takes the better block, or the
    # secondary's when the primary holds its flow back for t+1.
    open_p = (1 - r2) * (a * (mu2 + mu3) + win_x + lose_xp + (1 - a) * mu3)
    v_policy = reserved_p + (1 - a) * open_p
    v_default = open_p

    reserved_b = r1 * ex_above + a * r2 * ex_below + a * r2 * mu3
    v_primary = reserved_b + (1 - a) * r2 * (win_x + win_p * mu3)
    v_secondary = (1 - a) * r2 * (a * (mu2 + mu3) + lose_xp + lose_p * mu3)
    return v_policy, v_default, v_primary, v_secondary


POINTS = [
    (0.4, 0.5, 1.0, 0.0, 0.02),
    (0.3, 1.2, 2.5, 0.4, 0.1),
    (0.7, 0.2, 0.3, 0.85, 0.45),
    (0.5, 0.5, 2.0, 0.0, 0.02),
]

if __name__ == "__main__":
    for p in POINTS:
        vals = rewards(*p)
        print(" ".join(repr(v) for v in p), "->", " ".join(repr(v) for v in vals))
    sys.exit(0)
