"""Batch command surface over the pipeline modules.

Every subcommand is deterministic given its flags; RNG always flows
through an explicit --seed. Exit codes: 0 success, 2 usage error,
3 data/format error, 4 numeric/training failure. Errors print a single
`error: ...` line on stderr.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import melody, metrics, model, quantize, score, signal_io, stream
from .errors import TokmelError, TrainingError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _sniff(path) -> str:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"RIFF":
        return "wav"
    if magic == b"FMAT":
        return "fmat"
    if magic == b"TOKS":
        return "toks"
    raise TokmelError(f"unrecognized file type for {path}")


def _load_melody(path, fps: int) -> melody.MelodyTrack:
    kind = _sniff(path)
    if kind == "wav":
        return melody.estimate_f0(signal_io.read_wav(path), fps=fps)
    if kind == "toks":
        bundle = stream.unpack(open(path, "rb").read())
        if bundle.melody is None:
            raise TokmelError(f"{path} carries no melody track")
        return bundle.melody
    raise TokmelError(f"{path} is neither a WAV nor a TOKS melody file")


def _stack_features(paths) -> quantize.FeatureMatrix:
    mats = [stream.read_fmat(p) for p in paths]
    dims = {m.dim for m in mats}
    fpss = {m.fps for m in mats}
    if len(dims) > 1 or len(fpss) > 1:
        raise TokmelError(
            f"feature files disagree on dim ({sorted(dims)}) or fps ({sorted(fpss)})"
        )
    data = np.vstack([m.data for m in mats])
    return quantize.FeatureMatrix(data=data, fps=mats[0].fps, source=mats[0].source)


def cmd_extract_f0(args) -> int:
    clip = signal_io.read_wav(args.infile)
    track = melody.estimate_f0(
        clip, fps=args.fps, f_min=args.f_min, f_max=args.f_max
    )
    tokens = stream.TokenStream(streams=(), ks=(), fps=args.fps, n=len(track))
    with open(args.out, "wb") as fh:
        fh.write(stream.pack(stream.Bundle(tokens=tokens, melody=track)))
    print(f"frames={len(track)} voiced={track.voiced.sum()}")
    return EXIT_OK


def cmd_train_codebook(args) -> int:
    features = _stack_features(args.features)
    if args.rvq_stages:
        rvq = quantize.train_rvq(
            features,
            stages=args.rvq_stages,
            k_per_stage=args.k,
            max_iters=args.max_iters,
            tol=args.tol,
            seed=args.seed,
        )
        quantize.write_rvq(rvq, args.out)
        print(f"stages={rvq.num_stages} k={args.k} dim={rvq.dim}")
    else:
        cb = quantize.train_kmeans(
            features, k=args.k, max_iters=args.max_iters, tol=args.tol, seed=args.seed
        )
        quantize.write_codebook(cb, args.out)
        print(f"k={cb.k} dim={cb.dim} inertia={cb.inertia:.6g} iterations={cb.iterations}")
    return EXIT_OK


def cmd_encode(args) -> int:
    mats = [stream.read_fmat(p) for p in args.features]
    books = [quantize.read_codebook_file(p) for p in args.codebooks]

    if len(books) == 1 and isinstance(books[0], quantize.RvqCodebook):
        if len(mats) != 1:
            raise TokmelError("RVQ encoding takes exactly one feature file")
        streams = quantize.encode_rvq(books[0], mats[0])
        ks = [cb.k for cb in books[0].stages]
    else:
        if any(isinstance(b, quantize.RvqCodebook) for b in books):
            raise TokmelError("cannot mix RVQ containers with plain codebooks")
        if len(books) != len(mats):
            raise TokmelError(
                f"{len(mats)} feature files need {len(mats)} codebooks, got {len(books)}"
            )
        streams = quantize.blend_encode(list(zip(mats, books)))
        ks = [b.k for b in books]

    fps = mats[0].fps
    mel = _load_melody(args.melody, fps) if args.melody else None
    n = mats[0].num_frames
    if mel is not None and len(mel) != n:
        if len(mel) < n:
            raise TokmelError(f"melody has {len(mel)} frames, need {n}")
        mel = melody.MelodyTrack(mel.lf0[:n], mel.voiced[:n], mel.fps)
    tokens = stream.TokenStream(streams=tuple(streams), ks=tuple(ks), fps=fps, n=n)
    with open(args.out, "wb") as fh:
        fh.write(stream.pack(stream.Bundle(tokens=tokens, melody=mel)))
    print(f"frames={n} streams={len(ks)} melody={'yes' if mel is not None else 'no'}")
    return EXIT_OK


def cmd_decode(args) -> int:
    bundle = stream.unpack(open(args.tokens, "rb").read())
    tokens = bundle.tokens
    books = [quantize.read_codebook_file(p) for p in args.codebooks]

    if len(books) == 1 and isinstance(books[0], quantize.RvqCodebook):
        rvq = books[0]
        if tokens.num_streams != rvq.num_stages:
            raise TokmelError(
                f"container has {tokens.num_streams} streams, RVQ has {rvq.num_stages}"
            )
        out = quantize.decode_rvq(rvq, list(tokens.streams), fps=tokens.fps)
    else:
        if any(isinstance(b, quantize.RvqCodebook) for b in books):
            raise TokmelError("cannot mix RVQ containers with plain codebooks")
        if len(books) != tokens.num_streams:
            raise TokmelError(
                f"container has {tokens.num_streams} streams, got {len(books)} codebooks"
            )
        parts = [
            quantize.decode(cb, ids, fps=tokens.fps).data
            for cb, ids in zip(books, tokens.streams)
        ]
        data = np.hstack(parts) if parts else np.zeros((tokens.num_frames, 1))
        out = quantize.FeatureMatrix(data=data, fps=tokens.fps)
    stream.write_fmat(out, args.out)
    print(f"frames={out.num_frames} dim={out.dim}")
    return EXIT_OK


def cmd_bitrate(args) -> int:
    bundle = stream.unpack(open(args.tokens, "rb").read())
    melody_bits = args.melody_bits
    if melody_bits is None:
        melody_bits = stream.MELODY_BITS_PER_FRAME if bundle.melody is not None else 0
    bps = stream.bitrate(bundle.tokens.ks, bundle.tokens.fps, melody_bits)
    print(int(bps) if float(bps).is_integer() else bps)
    return EXIT_OK


def cmd_regulate(args) -> int:
    with open(args.score, "r", encoding="utf-8") as fh:
        parsed = score.parse_score(fh.read())
    plan = score.regulate(parsed, fps=args.fps)
    score.write_plan(plan, args.out)
    print(f"frames={len(plan)} phonemes={len(plan.phonemes)}")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    plan = score.read_plan(args.plan)
    bundle = stream.unpack(open(args.tokens, "rb").read())
    tokens = bundle.tokens
    if tokens.num_frames != len(plan):
        raise TokmelError(
            f"plan has {len(plan)} frames, tokens have {tokens.num_frames}"
        )
    x = model.plan_features(plan)
    mel = bundle.melody if bundle.melody is not None else score.score_melody(plan)
    predictor = model.ToyPredictor.create(
        input_dim=x.shape[1],
        hidden_dim=args.hidden,
        ks=tokens.ks,
        seed=args.seed,
        melody_enhanced=not args.no_melody_enhance,
    )
    config = model.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        lambda_m=args.lambda_m,
    )
    trained, history = model.train(predictor, [(x, tokens, mel)], config)
    model.save_model(trained, args.out)
    _, posteriors = model.forward(trained, x)
    acc = model.accuracy(tokens, posteriors)
    final = history[-1] if history else float("nan")
    print(f"epochs={args.epochs} final_loss={final:.6g} accuracy={acc:.4f}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    n, input_dim, hidden, ks = 6, 5, 4, (4, 3)
    x = rng.normal(0, 1, (n, input_dim))
    tokens = stream.TokenStream(
        streams=tuple(rng.integers(0, k, n) for k in ks), ks=ks, fps=50
    )
    voiced = rng.random(n) < 0.8
    lf0 = np.where(voiced, np.log(220) + rng.normal(0, 0.3, n), 0.0)
    mel = melody.MelodyTrack(lf0=lf0, voiced=voiced, fps=50)

    ok = True
    for enhanced in (True, False):
        predictor = model.ToyPredictor.create(
            input_dim, hidden, ks, seed=args.seed + enhanced, melody_enhanced=enhanced
        )
        worst = model.finite_difference_check(predictor, x, tokens, mel)
        print(f"melody_enhanced={enhanced} max_rel_error={worst:.3e}")
        ok = ok and worst < 1e-4
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_eval(args) -> int:
    ref_kind, hyp_kind = _sniff(args.ref), _sniff(args.hyp)
    if ref_kind != hyp_kind:
        raise TokmelError(f"cannot compare {ref_kind} against {hyp_kind}")

    if ref_kind == "fmat":
        a, b = stream.read_fmat(args.ref), stream.read_fmat(args.hyp)
        print(f"distortion={quantize.distortion(a, b):.6f}")
        return EXIT_OK

    if ref_kind == "wav":
        ref, hyp = signal_io.read_wav(args.ref), signal_io.read_wav(args.hyp)
        cep_a = metrics.mel_cepstrum(ref, fps=args.fps)
        cep_b = metrics.mel_cepstrum(hyp, fps=args.fps)
        n = min(len(cep_a), len(cep_b))
        cep_a = metrics.CepstralTrack(cep_a.frames[:n], args.fps, cep_a.order)
        cep_b = metrics.CepstralTrack(cep_b.frames[:n], args.fps, cep_b.order)
        mel_a = melody.estimate_f0(ref, fps=args.fps)
        mel_b = melody.estimate_f0(hyp, fps=args.fps)
        m = min(len(mel_a), len(mel_b))
        mel_a = melody.MelodyTrack(mel_a.lf0[:m], mel_a.voiced[:m], args.fps)
        mel_b = melody.MelodyTrack(mel_b.lf0[:m], mel_b.voiced[:m], args.fps)
    else:  # toks
        ba = stream.unpack(open(args.ref, "rb").read())
        bb = stream.unpack(open(args.hyp, "rb").read())
        if ba.melody is None or bb.melody is None:
            raise TokmelError("both TOKS files need a melody track to compare")
        mel_a, mel_b = ba.melody, bb.melody
        cep_a = None

    if cep_a is not None:
        print(f"mcd_db={metrics.mcd(cep_a, cep_b):.6f}")
    rmse = metrics.f0_rmse(mel_a, mel_b)
    sa = metrics.semitone_accuracy(mel_a, mel_b)
    print(f"f0_rmse_log={rmse.value:.6f}")
    print(f"co_voiced={rmse.co_voiced}")
    print(f"semitone_accuracy={'undefined' if sa.value is None else f'{sa.value:.6f}'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokmel", description="Discrete token + melody toolkit"
    )
    parser.add_argument(
        "--threads", type=int, default=1,
        help="worker threads (reserved; processing is single-threaded)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-f0", help="estimate F0 and write a melody-only TOKS")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--fps", type=int, default=50)
    p.add_argument("--f-min", type=float, default=melody.DEFAULT_F_MIN)
    p.add_argument("--f-max", type=float, default=melody.DEFAULT_F_MAX)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_f0)

    p = sub.add_parser("train-codebook", help="train k-means or RVQ codebooks")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--k", type=int, default=quantize.DEFAULT_K_SINGLE)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rvq-stages", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=quantize.DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=quantize.DEFAULT_TOL)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_codebook)

    p = sub.add_parser("encode", help="encode features into a TOKS bundle")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--codebooks", nargs="+", required=True)
    p.add_argument("--melody", help="WAV or melody TOKS to attach")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a TOKS bundle back to features")
    p.add_argument("--tokens", required=True)
    p.add_argument("--codebooks", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bitrate", help="bits/second of a TOKS bundle")
    p.add_argument("--tokens", required=True)
    p.add_argument("--melody-bits", type=int, default=None)
    p.set_defaults(func=cmd_bitrate)

    p = sub.add_parser("regulate", help="expand a score to a frame-level plan")
    p.add_argument("--score", required=True)
    p.add_argument("--fps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regulate)

    p = sub.add_parser("train-toy", help="train the toy melody-enhanced predictor")
    p.add_argument("--plan", required=True)
    p.add_argument("--tokens", required=True)
    p.add_argument("--no-melody-enhance", action="store_true")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lambda-m", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("grad-check", help="verify analytic gradients numerically")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("eval", help="compare two WAV/FMAT/TOKS files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--fps", type=int, default=50)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TokmelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
