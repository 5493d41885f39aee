#!/usr/bin/env python3
"""Independent reference for the record verifier.

Re-implements tokenization, the p:q emission order and the three checks
from scratch, then compares the outcome with the labels stored in each
fixture record ("label", "expected_overshoot").

usage: verify_oracle.py CORPUS [--p 2] [--q 8] [--dump]
exit status 0 when every labelled record agrees.
"""

import argparse
import json
import re
import sys

SPELLED = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
           "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
           "sixteen", "seventeen", "eighteen", "nineteen", "twenty"]

TOKEN_RE = re.compile(
    r"\d{1,3}(?:,\d{3}(?!\d))+(?:\.\d+)?"  # grouped integer, optional fraction
    r"|\d+(?:\.\d+)?"                        # plain integer, optional fraction
    r"|[A-Za-z\x80-\U0010ffff]+"            # word
    r"|\S")                                  # any other single character


def tokens(text):
    return TOKEN_RE.findall(text)


def numeral(tok):
    if tok[0].isdigit():
        s = tok.replace(",", "")
        if "." in s:
            whole, frac = s.split(".")
        else:
            whole, frac = s, ""
        whole = whole.lstrip("0") or "0"
        frac = frac.rstrip("0")
        return whole + ("." + frac if frac else "")
    low = tok.lower()
    return str(SPELLED.index(low)) if low in SPELLED else None


def key(tok):
    n = numeral(tok)
    return n if n is not None else tok


def emission_order(n_resp, n_reason, p, q, pad):
    """List of (kind, index) with kind in {'A', 'T', '|', '_'}; contiguous tail."""
    out = []
    a = t = 0
    while a < n_resp and t < n_reason:
        k = min(p, n_resp - a)
        out += [("A", a + i) for i in range(k)]
        a += k
        out.append(("|", None))
        k = min(q, n_reason - t)
        out += [("T", t + i) for i in range(k)]
        t += k
        out += [("_", None)] * pad
        out.append(("|", None))
    if a < n_resp:
        out += [("A", i) for i in range(a, n_resp)]
        out.append(("|", None))
    if t < n_reason:
        out.append(("|", None))
        out += [("T", i) for i in range(t, n_reason)]
        out += [("_", None)] * pad
        out.append(("|", None))
    return out


def verify(rec, p, q, pad, lo=1.2, hi=4.0):
    reason = tokens(rec["reasoning_text"])
    resp = tokens(rec["response_text"])
    if not reason or not resp:
        return {"verdict": "quarantine"}
    answer = [key(x) for x in tokens(rec["final_answer"])]
    rkeys = [key(x) for x in reason]
    if not answer or not any(rkeys[i:i + len(answer)] == answer for i in range(len(rkeys))):
        return {"verdict": "quarantine"}
    known = set()
    for field in ("question_text", "spoken_question_text"):
        for tok in tokens(rec.get(field, "")):
            if numeral(tok) is not None:
                known.add(numeral(tok))
    violations = []
    for seq_pos, (kind, idx) in enumerate(emission_order(len(resp), len(reason), p, q, pad)):
        if kind == "T" and numeral(reason[idx]) is not None:
            known.add(numeral(reason[idx]))
        elif kind == "A":
            n = numeral(resp[idx])
            if n is not None and n not in known:
                earliest = next((i for i, x in enumerate(reason) if numeral(x) == n), None)
                violations.append([idx, seq_pos, earliest])
    onset_ok = all(numeral(x) is None for x in resp[:p])
    ratio = len(reason) / len(resp)
    failed = []
    if violations:
        failed.append("overshoot")
    if not onset_ok:
        failed.append("onset")
    if not (lo <= ratio <= hi):
        failed.append("ratio")
    return {"verdict": "pass" if not failed else "fail",
            "primary": failed[0] if failed else None,
            "violations": violations, "ratio": ratio}


def expected_label(result):
    if result["verdict"] in ("pass", "quarantine"):
        return result["verdict"]
    return result["primary"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("corpus")
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--q", type=int, default=8)
    ap.add_argument("--padding", type=int, default=8)
    ap.add_argument("--dump", action="store_true")
    args = ap.parse_args()

    mismatches = 0
    counts = {}
    with open(args.corpus, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            res = verify(rec, args.p, args.q, args.padding)
            label = expected_label(res)
            counts[label] = counts.get(label, 0) + 1
            if args.dump:
                print(json.dumps({"id": rec["id"], "label": label,
                                  "violations": res.get("violations", []),
                                  "ratio": round(res.get("ratio", 0.0), 4)}))
            if "label" in rec and rec["label"] != label:
                print(f"{rec['id']}: labelled {rec['label']}, oracle says {label}")
                mismatches += 1
            if "expected_overshoot" in rec and rec["expected_overshoot"] != res.get("violations", []):
                print(f"{rec['id']}: expected {rec['expected_overshoot']}, "
                      f"oracle says {res.get('violations', [])}")
                mismatches += 1
    print(" ".join(f"{k}={counts[k]}" for k in sorted(counts)))
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
