"""Reference values for the C++ unit tests.

Independent float64 implementations written straight from the formulas.
Run with `python3 tests/oracles/derive.py`; the printed numbers are pasted
into the tests as constants.
"""
import itertools
import math

import numpy as np
from scipy import stats


def kernel_score(cos, centers, sigma, weights, bias=0.0):
    total = bias
    for w, mu in zip(weights, centers):
        acc = 0.0
        for row in cos:
            s = sum(math.exp(-((c - mu) ** 2) / (2 * sigma * sigma)) for c in row)
            acc += math.log(max(s, 1e-10))
        total += w * acc
    return total


def cosine(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def kernels():
    q = [(1.0, 0.0), (0.6, 0.8)]
    p = [(0.8, 0.6), (0.0, 1.0)]
    cos = [[cosine(a, b) for b in p] for a in q]
    centers = [-1.0 + 0.2 * i for i in range(11)]
    print("kernel cos matrix", cos)
    print("kernel 2x2 uniform score %.15g" % kernel_score(cos, centers, 0.1, [1 / 11] * 11))
    w = [0.1 * (i + 1) for i in range(11)]
    print("kernel 2x2 ramp score bias 0.25 %.15g" % kernel_score(cos, centers, 0.1, w, 0.25))
    print("exp(-2) %.15g" % math.exp(-2))


def bm25():
    docs = {"d1": "a b c".split(), "d2": "a a d e".split(), "d3": "b d".split()}
    n = len(docs)
    avg = sum(len(d) for d in docs.values()) / n
    k1, b = 0.9, 0.4
    for q in (["a", "d"], ["b"], ["e", "a"]):
        for pid, toks in docs.items():
            s = 0.0
            for t in q:
                df = sum(1 for d in docs.values() if t in d)
                tf = toks.count(t)
                if tf == 0:
                    continue
                idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
                s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(toks) / avg))
            print("bm25 q=%s %s %.15g" % ("+".join(q), pid, s))


def metrics():
    qrels = {
        "q1": {"p1": 1},
        "q2": {"p3": 1},
        "q3": {"p1": 1, "p5": 1},
        "q4": {"p7": 1, "p8": 1},
        "q5": {"p2": 2, "p4": 1},
        "q7": {"p1": 0},
    }
    run = {
        "q1": ["p1", "p2", "p3"],
        "q2": ["p2", "p3", "p4"],
        "q3": ["p1", "p9", "p5"],
        "q4": ["p1", "p2", "p3", "p7"] + ["x%d" % i for i in range(7)] + ["p8"],
        "q5": ["p4", "p2"],
        "q6": ["p1"],
        "q7": ["p1"],
    }
    per = {}
    for q, ranked in run.items():
        rel = qrels.get(q)
        if not rel or not any(g > 0 for g in rel.values()):
            continue
        top = ranked[:10]
        rr = next((1 / (i + 1) for i, p in enumerate(top) if rel.get(p, 0) > 0), 0.0)
        dcg = sum(rel.get(p, 0) / math.log2(i + 2) for i, p in enumerate(top) if rel.get(p, 0) > 0)
        ideal = sorted((g for g in rel.values() if g > 0), reverse=True)[:10]
        idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
        nrel = sum(1 for g in rel.values() if g > 0)
        rec = sum(1 for p in top if rel.get(p, 0) > 0) / nrel
        per[q] = (rr, dcg / idcg, rec)
        print("metrics %s rr=%.15g ndcg=%.15g recall=%.15g" % (q, rr, dcg / idcg, rec))
    for i, name in enumerate(("mrr", "ndcg", "recall")):
        print("metrics mean %s %.15g" % (name, sum(v[i] for v in per.values()) / len(per)))
    print("ndcg single rel at 2 %.15g" % (1 / math.log2(3)))
    print("ndcg rel at 1 and 3 %.15g" % ((1 + 0.5) / (1 + 1 / math.log2(3))))


def exact_signed_rank(d, pratt=False):
    """Brute force over all sign assignments of the non-zero ranks."""
    d = np.asarray(d, float)
    if not pratt:
        d = d[d != 0]
    ranks = stats.rankdata(np.abs(d))
    keep = d != 0
    r, s = ranks[keep], np.sign(d[keep])
    w_plus = r[s > 0].sum()
    w_minus = r[s < 0].sum()
    lo = hi = 0
    for signs in itertools.product((0, 1), repeat=len(r)):
        t = sum(ri for ri, si in zip(r, signs) if si)
        lo += t <= w_plus + 1e-9
        hi += t >= w_plus - 1e-9
    p = min(1.0, 2 * min(lo, hi) / 2 ** len(r))
    return w_plus, w_minus, p


def wilcoxon():
    for d in ([1, 2, -3, 4, 5, 6, 7, 8], [1, 2, 3, -4, 5, 6, 7, 8]):
        print("wilcoxon exact", d, "scipy", stats.wilcoxon(d, method="exact").pvalue, "brute", exact_signed_rank(d))
    d = [0, 1, -1, 2, 2, -3, 4, 4, 5, 0]
    print("wilcoxon ties wilcox brute", exact_signed_rank(d))
    print("wilcoxon ties pratt brute", exact_signed_rank(d, pratt=True))
    d = [((i * 37) % 23 - 9) / 4 for i in range(34)]
    print("wilcoxon approx d", d)
    res = stats.wilcoxon(d, method="approx", correction=True, zero_method="wilcox")
    print("wilcoxon approx wilcox p %.15g" % res.pvalue)
    res = stats.wilcoxon(d, method="approx", correction=True, zero_method="pratt")
    print("wilcoxon approx pratt p %.15g" % res.pvalue)


def fill(shape, tid, gain=False):
    n = int(np.prod(shape))
    v = 0.3 * np.sin(1.3 * np.arange(n) + 0.7 * tid + 0.1)
    if gain:
        v = 1.0 + v
    return v.reshape(shape)


def layer_norm(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-6) * g + b


def encoder_forward(x, emb, heads, hs, ff, layers):
    model = heads * hs
    proj = model != emb
    h = x @ fill((model, emb), 0).T + fill((model,), 1) if proj else x
    for L in range(layers):
        base = 4 + 16 * L
        t = lambda i, shape, gain=False: fill(shape, base + i, gain)
        q = h @ t(0, (model, model)).T + t(1, (model,))
        k = h @ t(2, (model, model)).T + t(3, (model,))
        v = h @ t(4, (model, model)).T + t(5, (model,))
        ctx = np.zeros_like(h)
        for hd in range(heads):
            sl = slice(hd * hs, (hd + 1) * hs)
            sc = q[:, sl] @ k[:, sl].T / math.sqrt(hs)
            sc = np.exp(sc - sc.max(axis=1, keepdims=True))
            sc /= sc.sum(axis=1, keepdims=True)
            ctx[:, sl] = sc @ v[:, sl]
        att = ctx @ t(6, (model, model)).T + t(7, (model,))
        h = layer_norm(h + att, t(12, (model,), True), t(13, (model,)))
        hid = np.maximum(h @ t(8, (ff, model)).T + t(9, (ff,)), 0.0)
        h = layer_norm(h + hid @ t(10, (model, ff)).T + t(11, (model,)), t(14, (model,), True), t(15, (model,)))
    if proj:
        h = h @ fill((emb, model), 2).T + fill((emb,), 3)
    return h


def pe(length, d, offset):
    out = np.zeros((length, d))
    for p in range(length):
        for i in range(d // 2):
            angle = (p + offset) / 10000 ** (2 * i / d)
            out[p, 2 * i] = math.sin(angle)
            out[p, 2 * i + 1] = math.cos(angle)
    return out


def transformer():
    emb, heads, hs, ff, layers = 6, 2, 2, 3, 2
    tokens = 3
    embed = np.array([[0.5 * math.cos(0.9 * (6 * r + c) + 0.2) for c in range(emb)] for r in range(tokens)])
    x = embed + pe(tokens, emb, 500)
    out = encoder_forward(x, emb, heads, hs, ff, layers)
    np.set_printoptions(precision=12, suppress=False)
    print("transformer forward rows")
    for row in out:
        print("  {" + ", ".join("%.12g" % v for v in row) + "},")
    alpha = 0.3
    mixed = alpha * embed + (1 - alpha) * out
    print("contextualize alpha 0.3 rows")
    for row in mixed:
        print("  {" + ", ".join("%.12g" % v for v in row) + "},")


def tv_pilot():
    rng = np.random.default_rng(12345)
    tvs = []
    for _ in range(2000):
        starts = rng.integers(0, 100, size=10_000)
        counts = np.bincount(starts // 5, minlength=20)
        tvs.append(0.5 * np.abs(counts / 10_000 - 0.05).sum())
    tvs = np.array(tvs)
    print("tv pilot mean %.4f p99.9 %.4f max %.4f" % (tvs.mean(), np.quantile(tvs, 0.999), tvs.max()))
    dev = []
    for _ in range(200):
        pos = rng.random(100_000)
        counts = np.bincount(np.minimum((pos * 20).astype(int), 19), minlength=20) / 100_000
        dev.append(np.abs(counts - 0.05).max())
    print("uniform 1e5 max bin deviation over 200 pilots %.5f" % max(dev))


if __name__ == "__main__":
    kernels()
    bm25()
    metrics()
    wilcoxon()
    transformer()
    tv_pilot()
