# scratch tuning harness for the desk protocol (not part of the package)
import sys
import time

import numpy as np

from cvak import data, harness, models


def run(protocol, attacks=harness.ATTACK_NAMES):
    t0 = time.monotonic()
    train_b, test_b = data.generate_synthetic(protocol.dataset)
    trained = harness.desk_models(protocol, train_b)
    for mid, m in trained.items():
        print(f"{mid}: train acc {m.accuracy(train_b.images, train_b.labels):.3f} "
              f"test acc {m.accuracy(test_b.images, test_b.labels):.3f}")
    curves = {}
    for mid, m in trained.items():
        for a in attacks:
            c = harness.evaluate_robustness(m, test_b, a, protocol.eps_grid,
                                            model_id=mid, seed=protocol.seed,
                                            steps=protocol.attack_steps, beta=protocol.beta)
            curves[(mid, a)] = c
            print(f"{mid:11s} {a:11s} " + " ".join(f"{v:5.3f}" for v in c.normalized))
    print(f"[{time.monotonic()-t0:.1f}s]")

    # criteria checks
    ok = True
    # (a) weak monotone decrease, <=2 violations per curve
    quantum = 1.0 / 90 + 1e-9  # one test sample of headroom
    for (mid, a), c in curves.items():
        viol = sum(1 for i in range(1, len(c.normalized)) if c.normalized[i] > c.normalized[i-1] + quantum)
        if viol > 2:
            print(f"(a) FAIL {mid} {a}: {viol} increases")
            ok = False
    # (b) iterative phase <= iterative unrestricted at two largest eps, clean models
    for mid in ("cvnn-clean", "rvnn-clean"):
        for pa, ca in (("pifgsm", "cifgsm"), ("pmifgsm", "cmifgsm")):
            if (mid, pa) not in curves or (mid, ca) not in curves:
                continue
            for i in (-2, -1):
                p, c_ = curves[(mid, pa)].normalized[i], curves[(mid, ca)].normalized[i]
                mark = "OK" if p <= c_ else "FAIL"
                if p > c_:
                    ok = False
                print(f"(b) {mark} {mid} eps[{i}]: {pa}={p:.3f} vs {ca}={c_:.3f}")
    # (c) magnitude >= phase at every eps, clean models
    for mid in ("cvnn-clean", "rvnn-clean"):
        for ma, pa in (("fgsm-mag", "pfgsm"), ("ifgsm-mag", "pifgsm"), ("mifgsm-mag", "pmifgsm")):
            if (mid, ma) not in curves or (mid, pa) not in curves:
                continue
            bad = [i for i in range(len(protocol.eps_grid))
                   if curves[(mid, ma)].normalized[i] < curves[(mid, pa)].normalized[i]]
            if bad:
                print(f"(c) FAIL {mid} {ma} < {pa} at idx {bad}: "
                      f"{[round(curves[(mid, ma)].normalized[i],3) for i in bad]} vs "
                      f"{[round(curves[(mid, pa)].normalized[i],3) for i in bad]}")
                ok = False
    # (d) adv training raises normalized accuracy at smallest nonzero eps by >= 5 points (cifgsm)
    for kind in ("cvnn", "rvnn"):
        if (f"{kind}-clean", "cifgsm") in curves and (f"{kind}-adv", "cifgsm") in curves:
            cl = curves[(f"{kind}-clean", "cifgsm")].normalized[1]
            av = curves[(f"{kind}-adv", "cifgsm")].normalized[1]
            mark = "OK" if av - cl >= 0.05 else "FAIL"
            if av - cl < 0.05:
                ok = False
            print(f"(d) {mark} {kind}: clean {cl:.3f} -> adv {av:.3f} (delta {av-cl:+.3f})")
    # adv clean-accuracy drop <= 10 points
    for kind in ("cvnn", "rvnn"):
        accs = {r: trained[f"{kind}-{r}"].accuracy(test_b.images, test_b.labels) for r in ("clean", "adv")}
        mark = "OK" if accs["clean"] - accs["adv"] <= 0.10 else "FAIL"
        print(f"(adv drop) {mark} {kind}: clean {accs['clean']:.3f} adv {accs['adv']:.3f}")
    print("ALL OK" if ok else "SOME FAIL")
    return curves


if __name__ == "__main__":
    proto = harness.DeskProtocol()
    run(proto)
