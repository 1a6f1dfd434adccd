"""First-pass CTC search: prefix beam search and WFST beam search over TLG.

Both decoders are frame-synchronous and streaming: construct one, feed
posterior chunks through `advance`, and call `finalize` for the n-best
list. The one-shot functions wrap that. Results are bit-identical however
the frames are chunked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .context import ContextGraph, ContextState
from .errors import ConfigurationError, ParseError
from .fst import WeightedFst
from .symbols import SymbolTable

NEG_INF = float("-inf")


def log_add(a: float, b: float) -> float:
    """log(exp(a) + exp(b)) without leaving the log domain."""
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


# -- posteriors ----------------------------------------------------------


class PosteriorMatrix:
    """Frames x tokens natural-log probabilities; column 0 is the blank."""

    def __init__(self, logprobs: np.ndarray):
        arr = np.asarray(logprobs, dtype=np.float64)
        if arr.ndim != 2:
            raise ConfigurationError("posterior matrix must be 2-dimensional")
        self.logprobs = arr

    @property
    def frames(self) -> int:
        return self.logprobs.shape[0]

    @property
    def tokens(self) -> int:
        return self.logprobs.shape[1]

    def row(self, t: int) -> np.ndarray:
        return self.logprobs[t]

    def validate(self, tol: float = 1e-4) -> "PosteriorMatrix":
        """Check each row is a normalized distribution (logsumexp ~ 0)."""
        for t in range(self.frames):
            mass = _logsumexp(self.logprobs[t])
            if not abs(mass) <= tol:
                raise ConfigurationError(
                    f"posterior row {t} is not normalized (logsumexp {mass:.6g})"
                )
        return self

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "PosteriorMatrix":
        probs = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return cls(np.log(probs)).validate()

    @classmethod
    def from_text(cls, text: str, *, source: str = "<posterior>") -> "PosteriorMatrix":
        lines = [line for line in text.splitlines()]
        header_line = 0
        header: list[str] = []
        for i, line in enumerate(lines):
            if line.strip():
                header = line.split()
                header_line = i + 1
                break
        if len(header) != 3:
            raise ParseError("expected header 'frames tokens domain'", source=source, line=header_line or 1)
        try:
            frames, tokens = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("frame/token counts must be integers", source=source, line=header_line) from None
        domain = header[2]
        if domain not in ("prob", "logprob"):
            raise ParseError(f"domain must be 'prob' or 'logprob', got {domain!r}", source=source, line=header_line)
        rows = []
        for lineno in range(header_line, len(lines)):
            line = lines[lineno].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != tokens:
                raise ParseError(f"expected {tokens} values, found {len(parts)}", source=source, line=lineno + 1)
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError("non-numeric posterior value", source=source, line=lineno + 1) from None
        if len(rows) != frames:
            raise ParseError(f"header declares {frames} frames but {len(rows)} rows follow", source=source)
        arr = np.array(rows, dtype=np.float64).reshape(frames, tokens)
        if domain == "prob":
            with np.errstate(divide="ignore"):
                arr = np.log(arr)
        matrix = cls(arr)
        try:
            return matrix.validate()
        except ConfigurationError as exc:
            raise ParseError(str(exc), source=source) from None

    @classmethod
    def read(cls, path: str | Path) -> "PosteriorMatrix":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), source=str(path))

    def to_text(self, domain: str = "logprob") -> str:
        if domain not in ("prob", "logprob"):
            raise ConfigurationError(f"domain must be 'prob' or 'logprob', got {domain!r}")
        values = np.exp(self.logprobs) if domain == "prob" else self.logprobs
        lines = [f"{self.frames} {self.tokens} {domain}"]
        for t in range(self.frames):
            lines.append(" ".join(repr(float(v)) for v in values[t]))
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path, domain: str = "logprob") -> None:
        Path(path).write_text(self.to_text(domain), encoding="utf-8")


def _logsumexp(row: np.ndarray) -> float:
    hi = float(np.max(row)) if row.size else NEG_INF
    if hi == NEG_INF:
        return NEG_INF
    return hi + math.log(float(np.sum(np.exp(row - hi))))


def skip_blank_frames(
    post: PosteriorMatrix, threshold: float
) -> tuple[PosteriorMatrix, tuple[int, ...]]:
    """Drop frames whose blank probability exceeds `threshold`.

    Returns the filtered matrix and the original indices of kept frames.
    """
    if not 0 < threshold <= 1:
        raise ConfigurationError("blank-skip threshold must be in (0, 1]")
    if post.frames == 0:
        return post, ()
    blank_prob = np.exp(post.logprobs[:, 0])
    keep = blank_prob <= threshold
    kept = tuple(int(i) for i in np.nonzero(keep)[0])
    return PosteriorMatrix(post.logprobs[keep]), kept


# -- hypotheses ----------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    """One decoding step: frame -1 marks the final-weight step."""

    frame: int
    ilabel: int
    olabel: int
    acoustic_logprob: float
    graph_weight: float


@dataclass(frozen=True)
class Hypothesis:
    units: tuple[int, ...]
    total_score: float
    score_ctc: float
    score_context: float = 0.0
    score_lm: float = 0.0
    words: tuple[str, ...] = ()
    score_l2r: float | None = None
    score_r2l: float | None = None
    trace: tuple[TraceStep, ...] | None = None

    def first_pass_score(self) -> float:
        return self.score_ctc + self.score_context + self.score_lm


@dataclass
class NBestList:
    hyps: list[Hypothesis] = field(default_factory=list)

    def __iter__(self):
        return iter(self.hyps)

    def __len__(self) -> int:
        return len(self.hyps)

    def __getitem__(self, i: int) -> Hypothesis:
        return self.hyps[i]

    def best(self) -> Hypothesis:
        return self.hyps[0]

    def to_text(self, unit_table: SymbolTable | None = None) -> str:
        """`rank total ctc context lm <tab> tokens <tab> words`, one line each."""
        lines = []
        for rank, hyp in enumerate(self.hyps, 1):
            if unit_table is not None:
                tokens = " ".join(unit_table.symbol_of(u) for u in hyp.units)
            else:
                tokens = " ".join(str(u) for u in hyp.units)
            words = " ".join(hyp.words)
            scores = " ".join(
                _fmt_score(v)
                for v in (hyp.total_score, hyp.score_ctc, hyp.score_context, hyp.score_lm)
            )
            lines.append(f"{rank} {scores}\t{tokens}\t{words}")
        return "\n".join(lines) + ("\n" if lines else "")


def _fmt_score(value: float) -> str:
    return f"{value + 0.0:.6f}"


@dataclass(frozen=True)
class DecodeOptions:
    """Decode-time knobs; defaults follow production conventions.

    `beam` is the hypothesis-count beam of prefix search; WFST search
    prunes by `score_beam` (score units) and `max_active` instead.
    """

    beam: int = 10
    nbest: int = 10
    acoustic_scale: float = 1.0
    lm_scale: float = 1.0
    blank_skip_threshold: float = 0.98
    context_score: float = 0.0
    alpha: float = 0.3
    ctc_weight: float = 0.5
    word_penalty: float = 0.0
    score_beam: float = 16.0
    max_active: int = 7000

    def __post_init__(self) -> None:
        if self.nbest < 1:
            raise ConfigurationError("nbest must be >= 1")
        if self.beam < self.nbest:
            raise ConfigurationError(f"beam ({self.beam}) must be >= nbest ({self.nbest})")
        if not 0 < self.blank_skip_threshold <= 1:
            raise ConfigurationError("blank_skip_threshold must be in (0, 1]")
        if self.context_score < 0:
            raise ConfigurationError("context_score must be >= 0")
        if not 0 <= self.alpha <= 1:
            raise ConfigurationError("alpha must be in [0, 1]")
        if self.ctc_weight < 0:
            raise ConfigurationError("ctc_weight must be >= 0")
        if self.max_active < 1:
            raise ConfigurationError("max_active must be >= 1")


# -- prefix beam search ----------------------------------------------------


class _PrefixEntry:
    __slots__ = ("pb", "pnb", "ctx", "ctx_score")

    def __init__(self, pb: float, pnb: float, ctx: ContextState | None, ctx_score: float):
        self.pb = pb
        self.pnb = pnb
        self.ctx = ctx
        self.ctx_score = ctx_score

    def total(self) -> float:
        return log_add(self.pb, self.pnb)


class PrefixBeamDecoder:
    """Streaming CTC prefix beam search (LM-free first pass).

    Tracks blank-ending / nonblank-ending log masses per prefix, applies
    the contextual boost on every prefix extension, and prunes to `beam`
    prefixes per frame by combined score with ties broken by token-id
    lexicographic order.
    """

    def __init__(
        self,
        beam: int = 10,
        nbest: int = 10,
        context: ContextGraph | None = None,
        blank_skip_threshold: float | None = None,
        blank: int = 0,
    ):
        if nbest < 1 or beam < nbest:
            raise ConfigurationError(f"need beam >= nbest >= 1, got beam={beam} nbest={nbest}")
        self.beam = beam
        self.nbest = nbest
        self.context = context
        self.blank_skip_threshold = blank_skip_threshold
        self.blank = blank
        self.frames_processed = 0
        self.frames_skipped = 0
        initial_ctx = context.initial_state() if context is not None else None
        self._entries: dict[tuple[int, ...], _PrefixEntry] = {
            (): _PrefixEntry(0.0, NEG_INF, initial_ctx, 0.0)
        }

    def advance(self, post: PosteriorMatrix | np.ndarray) -> None:
        matrix = post if isinstance(post, PosteriorMatrix) else PosteriorMatrix(post)
        if self.blank_skip_threshold is not None:
            matrix, _ = skip_blank_frames(matrix, self.blank_skip_threshold)
            self.frames_skipped += (post.frames if isinstance(post, PosteriorMatrix) else len(post)) - matrix.frames
        for t in range(matrix.frames):
            self._step([float(v) for v in matrix.row(t)])
            self.frames_processed += 1

    def _step(self, logp: list[float]) -> None:
        nxt: dict[tuple[int, ...], _PrefixEntry] = {}

        def entry_for(prefix: tuple[int, ...], ctx: ContextState | None, ctx_score: float) -> _PrefixEntry:
            entry = nxt.get(prefix)
            if entry is None:
                entry = _PrefixEntry(NEG_INF, NEG_INF, ctx, ctx_score)
                nxt[prefix] = entry
            return entry

        blank_lp = logp[self.blank]
        for prefix, cur in self._entries.items():
            total = cur.total()
            stay = entry_for(prefix, cur.ctx, cur.ctx_score)
            if total != NEG_INF and blank_lp != NEG_INF:
                stay.pb = log_add(stay.pb, total + blank_lp)
            if prefix and cur.pnb != NEG_INF and logp[prefix[-1]] != NEG_INF:
                stay.pnb = log_add(stay.pnb, cur.pnb + logp[prefix[-1]])
            for token in range(len(logp)):
                if token == self.blank:
                    continue
                lp = logp[token]
                if lp == NEG_INF:
                    continue
                source = cur.pb if (prefix and token == prefix[-1]) else total
                if source == NEG_INF:
                    continue
                extended = prefix + (token,)
                entry = nxt.get(extended)
                if entry is None:
                    if cur.ctx is not None:
                        ctx, delta = self.context.advance(cur.ctx, token)
                        entry = entry_for(extended, ctx, cur.ctx_score + delta)
                    else:
                        entry = entry_for(extended, None, 0.0)
                entry.pnb = log_add(entry.pnb, source + lp)

        ranked = sorted(
            nxt.items(), key=lambda item: (-(item[1].total() + item[1].ctx_score), item[0])
        )
        self._entries = dict(ranked[: self.beam])

    def finalize(self) -> NBestList:
        ranked = sorted(
            self._entries.items(),
            key=lambda item: (-(item[1].total() + item[1].ctx_score), item[0]),
        )
        hyps = []
        for prefix, entry in ranked[: self.nbest]:
            ctc = entry.total()
            hyps.append(
                Hypothesis(
                    units=prefix,
                    total_score=ctc + entry.ctx_score,
                    score_ctc=ctc,
                    score_context=entry.ctx_score,
                )
            )
        return NBestList(hyps)


def ctc_prefix_beam_search(
    post: PosteriorMatrix,
    beam: int = 10,
    nbest: int = 10,
    context: ContextGraph | None = None,
    blank_skip_threshold: float | None = None,
) -> NBestList:
    decoder = PrefixBeamDecoder(
        beam=beam, nbest=nbest, context=context, blank_skip_threshold=blank_skip_threshold
    )
    decoder.advance(post)
    return decoder.finalize()


# -- WFST beam search ------------------------------------------------------


class _Token:
    __slots__ = ("state", "cost", "ac_cost", "graph_cost", "ctx", "ctx_score", "words", "trace")

    def __init__(self, state, cost, ac_cost, graph_cost, ctx, ctx_score, words, trace):
        self.state = state
        self.cost = cost
        self.ac_cost = ac_cost
        self.graph_cost = graph_cost
        self.ctx = ctx
        self.ctx_score = ctx_score
        self.words = words
        self.trace = trace  # linked (parent_trace, TraceStep) chain


class WfstBeamDecoder:
    """Frame-synchronous Viterbi beam search over a TLG decoding graph.

    Graph input label l > 0 consumes acoustic token l - 1 (so `<blank>` at
    acoustic id 0 is graph label 1); label 0 arcs are free moves expanded
    after each frame. Blank-dominant frames are skipped before search per
    `opts.blank_skip_threshold`. Biasing advances on emitted words.
    """

    _EPS_RELAX_LIMIT = 1_000_000

    def __init__(
        self,
        graph: WeightedFst,
        opts: DecodeOptions | None = None,
        context: ContextGraph | None = None,
    ):
        if graph.is_empty():
            raise ConfigurationError("decoding graph is empty")
        self.graph = graph
        self.opts = opts if opts is not None else DecodeOptions()
        self.context = context
        self.frames_processed = 0
        self.frames_skipped = 0
        self._frames_seen = 0
        self._emit_arcs: list[list] = []
        self._eps_arcs: list[list] = []
        max_ilabel = 0
        for state in graph.states():
            emit, eps = [], []
            for arc in graph.arcs(state):
                if arc.ilabel == 0:
                    eps.append(arc)
                else:
                    emit.append(arc)
                    max_ilabel = max(max_ilabel, arc.ilabel)
            self._emit_arcs.append(emit)
            self._eps_arcs.append(eps)
        self._max_ilabel = max_ilabel
        initial_ctx = context.initial_state() if context is not None else None
        start = _Token(graph.start, 0.0, 0.0, 0.0, initial_ctx, 0.0, (), None)
        self._tokens: dict[tuple[int, int], _Token] = {self._key(start): start}
        self._eps_expand()

    def _key(self, token: _Token) -> tuple[int, int]:
        return (token.state, token.ctx.node if token.ctx is not None else 0)

    def advance(self, post: PosteriorMatrix | np.ndarray) -> None:
        matrix = post if isinstance(post, PosteriorMatrix) else PosteriorMatrix(post)
        if matrix.frames and matrix.tokens < self._max_ilabel:
            raise ConfigurationError(
                f"graph consumes {self._max_ilabel} acoustic tokens but posterior rows have {matrix.tokens}"
            )
        kept, indices = skip_blank_frames(matrix, self.opts.blank_skip_threshold)
        self.frames_skipped += matrix.frames - kept.frames
        for local, original in enumerate(indices):
            self._step([float(v) for v in kept.row(local)], self._frames_seen + original)
            self.frames_processed += 1
        self._frames_seen += matrix.frames

    def _step(self, logp: list[float], frame: int) -> None:
        opts = self.opts
        nxt: dict[tuple[int, int], _Token] = {}
        for token in self._tokens.values():
            for arc in self._emit_arcs[token.state]:
                lp = logp[arc.ilabel - 1]
                if lp == NEG_INF:
                    continue
                ac = -lp * opts.acoustic_scale
                gw = arc.weight * opts.lm_scale
                ctx = token.ctx
                ctx_delta = 0.0
                words = token.words
                if arc.olabel != 0:
                    gw += opts.word_penalty
                    words = words + (arc.olabel,)
                    if ctx is not None:
                        ctx, ctx_delta = self.context.advance(ctx, arc.olabel)
                cand = _Token(
                    arc.nextstate,
                    token.cost + ac + gw - ctx_delta,
                    token.ac_cost + ac,
                    token.graph_cost + gw,
                    ctx,
                    token.ctx_score + ctx_delta,
                    words,
                    (token.trace, TraceStep(frame, arc.ilabel, arc.olabel, lp, arc.weight)),
                )
                key = (cand.state, cand.ctx.node if cand.ctx is not None else 0)
                best = nxt.get(key)
                if best is None or cand.cost < best.cost:
                    nxt[key] = cand
        self._tokens = nxt
        self._eps_expand(frame)
        self._prune()

    def _eps_expand(self, frame: int = -2) -> None:
        """Relax label-0 arcs to a fixed point (no frame is consumed)."""
        opts = self.opts
        worklist = list(self._tokens.values())
        relaxed = 0
        while worklist:
            token = worklist.pop()
            current = self._tokens.get(self._key(token))
            if current is not token:
                continue  # superseded by a cheaper token at this key
            for arc in self._eps_arcs[token.state]:
                gw = arc.weight * opts.lm_scale
                ctx = token.ctx
                ctx_delta = 0.0
                words = token.words
                if arc.olabel != 0:
                    gw += opts.word_penalty
                    words = words + (arc.olabel,)
                    if ctx is not None:
                        ctx, ctx_delta = self.context.advance(ctx, arc.olabel)
                cand = _Token(
                    arc.nextstate,
                    token.cost + gw - ctx_delta,
                    token.ac_cost,
                    token.graph_cost + gw,
                    ctx,
                    token.ctx_score + ctx_delta,
                    words,
                    (token.trace, TraceStep(frame, 0, arc.olabel, 0.0, arc.weight)),
                )
                key = (cand.state, cand.ctx.node if cand.ctx is not None else 0)
                best = self._tokens.get(key)
                if best is None or cand.cost < best.cost:
                    self._tokens[key] = cand
                    worklist.append(cand)
                    relaxed += 1
                    if relaxed > self._EPS_RELAX_LIMIT:
                        raise ConfigurationError(
                            "epsilon expansion did not converge; the graph has an improving label-0 cycle"
                        )

    def _prune(self) -> None:
        if not self._tokens:
            return
        best = min(token.cost for token in self._tokens.values())
        keep = [
            (token.cost, key, token)
            for key, token in self._tokens.items()
            if token.cost <= best + self.opts.score_beam
        ]
        keep.sort(key=lambda item: (item[0], item[1]))
        keep = keep[: self.opts.max_active]
        self._tokens = {key: token for _, key, token in keep}

    def finalize(self) -> NBestList:
        opts = self.opts
        candidates = []
        any_final = any(
            self.graph.final_weight(token.state) != math.inf for token in self._tokens.values()
        )
        for key, token in sorted(self._tokens.items()):
            fw = self.graph.final_weight(token.state)
            if fw == math.inf:
                if any_final:
                    continue
                fw = 0.0  # no token reached a final state; fall back to all survivors
            graph_cost = token.graph_cost + fw * opts.lm_scale
            cost = token.cost + fw * opts.lm_scale
            trace = _unwind(token.trace)
            if fw != 0.0 or any_final:
                trace = trace + (TraceStep(-1, 0, 0, 0.0, fw),)
            candidates.append((cost, token, graph_cost, trace))

        by_words: dict[tuple[int, ...], tuple] = {}
        for cost, token, graph_cost, trace in candidates:
            prev = by_words.get(token.words)
            if prev is None or cost < prev[0]:
                by_words[token.words] = (cost, token, graph_cost, trace)

        ranked = sorted(by_words.items(), key=lambda item: (item[1][0], item[0]))
        hyps = []
        for words, (cost, token, graph_cost, trace) in ranked[: opts.nbest]:
            units = _collapse(
                tuple(step.ilabel - 1 for step in trace if step.ilabel > 0)
            )
            hyps.append(
                Hypothesis(
                    units=units,
                    total_score=-cost,
                    score_ctc=-token.ac_cost,
                    score_context=token.ctx_score,
                    score_lm=-graph_cost,
                    words=tuple(self.graph.osymbols.symbol_of(w) for w in words),
                    trace=trace,
                )
            )
        if not hyps:
            hyps = [Hypothesis(units=(), total_score=NEG_INF, score_ctc=NEG_INF)]
        return NBestList(hyps)


def _unwind(chain) -> tuple[TraceStep, ...]:
    steps = []
    while chain is not None:
        chain, step = chain
        steps.append(step)
    return tuple(reversed(steps))


def _collapse(labels: Sequence[int], blank: int = 0) -> tuple[int, ...]:
    """CTC collapse: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for label in labels:
        if label != prev:
            out.append(label)
        prev = label
    return tuple(label for label in out if label != blank)


def ctc_wfst_beam_search(
    post: PosteriorMatrix,
    graph: WeightedFst,
    opts: DecodeOptions | None = None,
    context: ContextGraph | None = None,
) -> NBestList:
    decoder = WfstBeamDecoder(graph, opts, context)
    decoder.advance(post)
    return decoder.finalize()
