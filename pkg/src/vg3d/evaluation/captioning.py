"""IoU-gated caption metrics: CIDEr-D, BLEU-4 and ROUGE-L.

The metric definitions follow the COCO caption toolkit. A sample whose
proposal box overlaps its ground-truth box with IoU below the gate scores 0
on every metric and still counts in the corpus mean.
"""

from collections import Counter
from dataclasses import dataclass, field
import math
import re

from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from ..geometry import iou_3d

__all__ = [
    "CaptionSample",
    "CaptionScorer",
    "tokenize",
    "CiderD",
    "cider",
    "bleu4",
    "rouge_l",
    "iou_gated_scores",
]

_PUNCT = re.compile(r"[^\w\s]|_")


def tokenize(text):
    """Lowercase, turn punctuation into spaces, split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


def _as_tokens(x):
    return tokenize(x) if isinstance(x, str) else list(x)


def _ngrams(tokens, n_max):
    counts = Counter()
    for n in range(1, n_max + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i:i + n])] += 1
    return counts


class CiderD:
    """CIDEr-D with document frequencies taken from a reference corpus.

    Parameters
    ----------
    n : int, default=4
        Largest n-gram order.
    sigma : float, default=6.0
        Width of the Gaussian length penalty.

    Notes
    -----
    The toolkit measures sentence length by its bigram count, which is kept
    here so scores line up with published numbers.
    """

    def __init__(self, n=4, sigma=6.0):
        self.n = n
        self.sigma = sigma

    def fit(self, references):
        """Compute document frequencies over ``references`` (one list of refs per item)."""
        refs = [[_ngrams(_as_tokens(r), self.n) for r in group] for group in references]
        self.document_frequency_ = Counter()
        for group in refs:
            for ngram in set(g for r in group for g in r):
                self.document_frequency_[ngram] += 1
        self.ref_len_ = math.log(float(len(refs))) if refs else 0.0
        return self

    def _vec(self, counts):
        vec = [{} for _ in range(self.n)]
        norm = [0.0] * self.n
        length = 0
        for ngram, tf in counts.items():
            k = len(ngram) - 1
            df = math.log(max(1.0, self.document_frequency_.get(ngram, 0.0)))
            w = float(tf) * (self.ref_len_ - df)
            vec[k][ngram] = w
            norm[k] += w * w
            if k == 1:
                length += tf
        return vec, [math.sqrt(v) for v in norm], length

    def _sim(self, hyp, ref):
        vec_h, norm_h, len_h = hyp
        vec_r, norm_r, len_r = ref
        penalty = math.exp(-((len_h - len_r) ** 2) / (2 * self.sigma ** 2))
        val = [0.0] * self.n
        for k in range(self.n):
            for ngram, w in vec_h[k].items():
                wr = vec_r[k].get(ngram, 0.0)
                val[k] += min(w, wr) * wr
            if norm_h[k] != 0 and norm_r[k] != 0:
                val[k] /= norm_h[k] * norm_r[k]
            val[k] *= penalty
        return val

    def score(self, candidate, references):
        """CIDEr-D of one candidate against its references (already fitted corpus)."""
        hyp = self._vec(_ngrams(_as_tokens(candidate), self.n))
        total = [0.0] * self.n
        refs = list(references)
        for r in refs:
            s = self._sim(hyp, self._vec(_ngrams(_as_tokens(r), self.n)))
            total = [a + b for a, b in zip(total, s)]
        return 10.0 * (sum(total) / self.n) / len(refs)


def cider(candidates, references, n_max=4, sigma=6.0):
    """Per-candidate CIDEr-D scores and their mean; IDF comes from ``references``."""
    if not candidates:
        raise ValueError("cider needs a non-empty corpus")
    scorer = CiderD(n_max, sigma).fit(references)
    scores = [scorer.score(c, refs) for c, refs in zip(candidates, references)]
    return scores, sum(scores) / len(scores)


def bleu4(candidate, references):
    """Sentence BLEU-4 without smoothing; brevity penalty uses the closest reference length."""
    cand = _as_tokens(candidate)
    refs = [_as_tokens(r) for r in references]
    if not cand or not refs:
        return 0.0
    log_p = 0.0
    for n in range(1, 5):
        c_counts = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
        total = sum(c_counts.values())
        if total == 0:
            return 0.0
        max_ref = Counter()
        for r in refs:
            for g, k in Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1)).items():
                max_ref[g] = max(max_ref[g], k)
        clipped = sum(min(k, max_ref[g]) for g, k in c_counts.items())
        if clipped == 0:
            return 0.0
        log_p += math.log(clipped / total) / 4
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_p)


def _lcs(a, b):
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, references, beta=1.2):
    """ROUGE-L F-measure from the best precision and best recall over references."""
    cand = _as_tokens(candidate)
    refs = [_as_tokens(r) for r in references]
    if not cand or not refs:
        return 0.0
    prec, rec = [], []
    for r in refs:
        if not r:
            continue
        lcs = _lcs(r, cand)
        prec.append(lcs / len(cand))
        rec.append(lcs / len(r))
    if not prec:
        return 0.0
    p, r = max(prec), max(rec)
    if p == 0 or r == 0:
        return 0.0
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


@dataclass(frozen=True)
class CaptionSample:
    object_id: str
    proposal_box: object
    gt_box: object
    references: tuple
    candidate: str

    def __post_init__(self):
        if not self.references:
            raise ValueError(f"sample {self.object_id}: references must be non-empty")
        object.__setattr__(self, "references", tuple(self.references))


@dataclass
class CaptionReport:
    gate: float
    n_samples: int
    cider: float
    bleu4: float
    rouge_l: float
    per_sample: list = field(default_factory=list)

    def to_dict(self):
        g = f"{self.gate:g}"
        return {
            "task": "captioning",
            "gate": self.gate,
            "n_samples": self.n_samples,
            "metrics": {
                f"C@{g}": self.cider,
                f"B-4@{g}": self.bleu4,
                f"M@{g}": "n/a",
                f"R@{g}": self.rouge_l,
            },
            "per_sample": self.per_sample,
        }


def _score_sample(scorer, s, gate):
    iou = iou_3d(s.proposal_box, s.gt_box)
    row = {"object_id": s.object_id, "iou": iou, "cider": 0.0, "bleu4": 0.0, "rouge_l": 0.0}
    if iou >= gate:
        row["cider"] = scorer.score(s.candidate, s.references)
        row["bleu4"] = bleu4(s.candidate, s.references)
        row["rouge_l"] = rouge_l(s.candidate, s.references)
    return row


def iou_gated_scores(samples, gate=0.5, n_jobs=1):
    """Corpus CIDEr-D / BLEU-4 / ROUGE-L with samples below the IoU gate scored 0.

    Document frequencies are computed over the references of all samples,
    gated or not.
    """
    ordered = sorted(samples, key=lambda s: s.object_id)
    if not ordered:
        return CaptionReport(gate, 0, 0.0, 0.0, 0.0)
    scorer = CiderD().fit([s.references for s in ordered])
    if n_jobs == 1:
        rows = [_score_sample(scorer, s, gate) for s in ordered]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(_score_sample)(scorer, s, gate) for s in ordered)
    n = len(rows)
    return CaptionReport(
        gate=gate,
        n_samples=n,
        cider=sum(r["cider"] for r in rows) / n,
        bleu4=sum(r["bleu4"] for r in rows) / n,
        rouge_l=sum(r["rouge_l"] for r in rows) / n,
        per_sample=rows,
    )


class CaptionScorer(BaseEstimator):
    """Estimator-style wrapper around :func:`iou_gated_scores`."""

    def __init__(self, gate=0.5, n_jobs=1):
        self.gate = gate
        self.n_jobs = n_jobs

    def score(self, samples):
        self.report_ = iou_gated_scores(samples, self.gate, self.n_jobs)
        return self.report_.cider
