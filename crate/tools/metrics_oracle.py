#!/usr/bin/env python3
"""Reference scorer for the committed metrics fixture.

Standalone port of the BLEU / ROUGE-L / CIDEr-D scorers used by the common
captioning benchmarks (corpus BLEU with clipped n-gram precisions and the
closest-reference brevity penalty; ROUGE-L with beta=1.2 taking max precision
and max recall over references; CIDEr-D with TF-IDF n-gram cosines, a length
gaussian of sigma=6, and the x10 scale). Run against a fixture JSON to
regenerate the expected values committed under tests/data/.

Usage: python3 tools/metrics_oracle.py crates/core/tests/data/metrics_fixture.json
"""

import json
import math
import sys
from collections import Counter, defaultdict

MAX_N = 4


def ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(hyps, refs_lists):
    correct = [0] * MAX_N
    guess = [0] * MAX_N
    test_len = 0
    ref_len = 0
    for hyp, refs in zip(hyps, refs_lists):
        test_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, MAX_N + 1):
            hyp_counts = ngrams(hyp, n)
            max_ref = Counter()
            for r in refs:
                for gram, count in ngrams(r, n).items():
                    max_ref[gram] = max(max_ref[gram], count)
            correct[n - 1] += sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
            guess[n - 1] += max(0, len(hyp) - n + 1)
    log_sum = 0.0
    for n in range(MAX_N):
        if correct[n] == 0 or guess[n] == 0:
            return 0.0
        log_sum += math.log(correct[n] / guess[n])
    brevity = math.exp(1.0 - ref_len / test_len) if test_len < ref_len else 1.0
    return brevity * math.exp(log_sum / MAX_N)


def lcs(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0] * (len(b) + 1)
        for j, y in enumerate(b):
            row[j + 1] = prev[j] + 1 if x == y else max(row[j], prev[j + 1])
        prev = row
    return prev[len(b)]


def rouge_l(hyps, refs_lists, beta=1.2):
    total = 0.0
    for hyp, refs in zip(hyps, refs_lists):
        prec = max(lcs(r, hyp) / len(hyp) for r in refs)
        rec = max(lcs(r, hyp) / len(r) for r in refs)
        if prec != 0 and rec != 0:
            total += (1 + beta**2) * prec * rec / (rec + beta**2 * prec)
    return total / len(hyps)


def cider_d(hyps, refs_lists, corpus, sigma=6.0):
    doc_freq = defaultdict(int)
    for refs in corpus:
        seen = set()
        for r in refs:
            for n in range(1, MAX_N + 1):
                seen.update(ngrams(r, n).keys())
        for gram in seen:
            doc_freq[gram] += 1
    log_corpus = math.log(len(corpus))

    def vectorize(tokens):
        vecs = [dict() for _ in range(MAX_N)]
        norms = [0.0] * MAX_N
        length = 0
        for n in range(1, MAX_N + 1):
            for gram, tf in ngrams(tokens, n).items():
                weight = tf * (log_corpus - math.log(max(1.0, doc_freq[gram])))
                vecs[n - 1][gram] = weight
                norms[n - 1] += weight * weight
                if n == 2:
                    length += tf
        return vecs, [math.sqrt(x) for x in norms], length

    def sim(hv, hn, hl, rv, rn, rl):
        delta = float(hl - rl)
        penalty = math.exp(-(delta**2) / (2 * sigma**2))
        total = 0.0
        for n in range(MAX_N):
            val = sum(min(w, rv[n].get(g, 0.0)) * rv[n].get(g, 0.0) for g, w in hv[n].items())
            if hn[n] != 0 and rn[n] != 0:
                val /= hn[n] * rn[n]
            total += val * penalty
        return total / MAX_N

    total = 0.0
    for hyp, refs in zip(hyps, refs_lists):
        hv, hn, hl = vectorize(hyp)
        score = 0.0
        for r in refs:
            rv, rn, rl = vectorize(r)
            score += sim(hv, hn, hl, rv, rn, rl)
        total += score / len(refs) * 10.0
    return total / len(hyps)


def main(path):
    with open(path) as fh:
        fixture = json.load(fh)
    hyps = [h.split() for h in fixture["hypotheses"]]
    refs = [[r.split() for r in rs] for rs in fixture["references"]]
    identity = [rs[0] for rs in refs]
    expected = {
        "bleu4": bleu4(hyps, refs),
        "rougeL": rouge_l(hyps, refs),
        "ciderD": cider_d(hyps, refs, refs),
        "identity_ciderD": cider_d(identity, refs, refs),
    }
    print(json.dumps(expected, indent=2))


if __name__ == "__main__":
    main(sys.argv[1])
