"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 gradient check
above tolerance. Numbers are printed with 6 significant digits.
"""

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import align as A
from . import analysis
from . import diff
from . import fusion as F
from . import toytask as tt
from .audio import read_wav
from .errors import FuseFrontError, UsageError
from .features import Source
from .spectral import SpectralConfig, extract_fbank
from .ssl_source import SslSourceConfig, read_features, save_features, ssl_frame_count, synth_features

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TOLERANCE = 0, 1, 2, 3


def fmt(x):
    return f"{x:.6g}"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _fusion_config(args, dim):
    values = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    cfg = F.FusionConfig.from_mapping(values) if values else F.FusionConfig()
    overrides = {
        "variant": args.variant,
        "theta": args.theta,
        "kernel_size": args.kernel_size,
        "bias": args.bias,
    }
    kwargs = {k: getattr(cfg, k) for k in F.FusionConfig.__dataclass_fields__}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    kwargs["dim"] = dim
    return F.FusionConfig(**kwargs)


def cmd_extract_fbank(args):
    cfg = SpectralConfig(
        frame_length_ms=args.frame_length_ms,
        frame_shift_ms=args.frame_shift_ms,
        n_mels=args.n_mels,
        pre_emphasis=args.pre_emphasis,
        sample_rate=args.sample_rate,
        window=args.window,
    )
    fm = extract_fbank(read_wav(args.input), cfg)
    save_features(fm, args.out)
    print(f"frames={fm.n_frames} dim={fm.dim} frame_shift_ms={fmt(fm.frame_shift_ms)}")


def cmd_synth_ssl(args):
    if (args.frames is None) == (args.audio is None):
        raise UsageError("synth-ssl needs exactly one of --frames or --audio")
    n = args.frames
    if args.audio is not None:
        w = read_wav(args.audio)
        n = ssl_frame_count(len(w), w.sample_rate)
    fm = synth_features(SslSourceConfig(dim=args.dim, frame_shift_ms=args.frame_shift_ms, seed=args.seed), n)
    save_features(fm, args.out)
    print(f"frames={fm.n_frames} dim={fm.dim} frame_shift_ms={fmt(fm.frame_shift_ms)}")


def _align_params(args, sf_dim, ssl_dim):
    if args.model:
        model = tt.load_model(args.model)
        if model.align is None:
            raise UsageError(f"{args.model} has no alignment parameters")
        return model.align
    return A.init_align(sf_dim, ssl_dim, args.dim or sf_dim, args.seed)


def cmd_align(args):
    f_sf, f_ssl = read_features(args.sf), read_features(args.ssl)
    p = _align_params(args, f_sf.dim, f_ssl.dim)
    a_sf, a_ssl = A.align_pair(f_sf, f_ssl, p)
    save_features(a_sf, args.out_sf)
    save_features(a_ssl, args.out_ssl)
    print(f"frames={a_sf.n_frames} dim={a_sf.dim}")


def cmd_fuse(args):
    f_sf, f_ssl = read_features(args.sf), read_features(args.ssl)
    if args.model:
        model = tt.load_model(args.model)
        variant, params = model.variant, model.fusion
    else:
        cfg = _fusion_config(args, f_sf.dim)
        variant, params = cfg.variant, F.init_fusion(cfg, args.seed)
    fused = F.fuse(variant, f_sf.data, f_ssl.data, params)
    save_features(f_sf.replace(data=fused, source=Source.FUSED), args.out)
    print(f"variant={variant.value} frames={fused.shape[0]} dim={fused.shape[1]}")


def cmd_gradcheck(args):
    variants = diff.CHECKABLE if args.variant == "all" else (args.variant,)
    worst = 0.0
    for variant in variants:
        inputs, params = diff.random_case(
            variant, args.seed, n_frames=args.frames, dim=args.dim, theta=args.theta or F.Theta.LOGSOFTMAX
        )
        report = diff.gradient_errors(variant, inputs, params, eps=args.eps)
        for name, err in report.items():
            print(f"{variant}\t{name}\t{fmt(err)}")
        worst = max(worst, max(report.values(), default=0.0))
    status = "PASS" if worst < args.tol else "FAIL"
    print(f"max_rel_err={fmt(worst)} tol={fmt(args.tol)} {status}")
    return EXIT_OK if worst < args.tol else EXIT_TOLERANCE


def cmd_train_toy(args):
    spec = tt.ToyDatasetSpec(
        n_utts=args.n_utts,
        frames_per_utt=args.frames,
        n_classes=args.classes,
        informative=args.informative,
        snr=args.snr,
        seed=args.seed,
        dim=args.dim,
    )
    data = tt.make_dataset(spec)
    model = tt.init_model(
        args.variant, args.dim, args.classes, seed=args.seed,
        theta=args.theta or F.Theta.LOGSOFTMAX, kernel_size=args.kernel_size or 5,
        bias=True if args.bias is None else args.bias,
    )
    model, curve = tt.train(model, data, tt.TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed))
    tt.save_model(model, args.out)
    if args.data_out:
        tt.save_dataset(data, args.data_out)
    print(f"initial_loss={fmt(curve[0]) if curve else 'nan'} final_loss={fmt(curve[-1]) if curve else 'nan'}")
    print(f"train_accuracy={fmt(tt.evaluate(model, data))}")
    if model.variant is F.Variant.MOE:
        w_sf, w_ssl = tt.mean_gate_weight(model, data)
        print(f"mean_w_sf={fmt(w_sf)} mean_w_ssl={fmt(w_ssl)}")


def cmd_analyze_gates(args):
    model = tt.load_model(args.model)
    data = tt.load_dataset(args.data)
    gates = [analysis.normalize_gates(g) for g in tt.dataset_gates(model, data)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["utt_id", "mean_w_sf", "mean_w_ssl", "var"])
    if args.per == "utterance":
        for i, s in enumerate(analysis.weight_summary(gates, per="utterance")):
            writer.writerow([f"utt{i:04d}", fmt(s.mean_w_sf), fmt(s.mean_w_ssl), fmt(s.var_w_ssl)])
    else:
        s = analysis.weight_summary(gates, per="corpus")
        writer.writerow(["corpus", fmt(s.mean_w_sf), fmt(s.mean_w_ssl), fmt(s.var_w_ssl)])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def cmd_cerr(args):
    value = analysis.cerr(args.base, args.ssl)
    print(f"cerr={fmt(value)} rounded={analysis.round_percent(value)}%")


def _add_fusion_flags(p, with_variant=True):
    if with_variant:
        p.add_argument("--variant", choices=[v.value for v in F.Variant])
    p.add_argument("--theta", choices=[t.value for t in F.Theta])
    p.add_argument("--kernel-size", type=int)
    p.add_argument("--bias", dest="bias", action="store_true", default=None)
    p.add_argument("--no-bias", dest="bias", action="store_false", help="bias-free (pure matrix product) form")


def build_parser():
    parser = _Parser(prog="fusefront", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract-fbank", help="log-Mel filterbank features from a PCM16 mono WAV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-mels", type=int, default=80)
    p.add_argument("--frame-length-ms", type=float, default=25.0)
    p.add_argument("--frame-shift-ms", type=float, default=10.0)
    p.add_argument("--pre-emphasis", type=float, default=0.97)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--window", choices=["hann", "rectangular"], default="hann")
    p.set_defaults(func=cmd_extract_fbank)

    p = sub.add_parser("synth-ssl", help="seeded synthetic SSL feature stream")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--frames", type=int)
    p.add_argument("--audio", help="take the frame count an SSL encoder would give this WAV")
    p.add_argument("--frame-shift-ms", type=float, default=20.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_ssl)

    p = sub.add_parser("align", help="project/downsample an SF and an SSL stream to a common T x D")
    p.add_argument("--sf", required=True)
    p.add_argument("--ssl", required=True)
    p.add_argument("--out-sf", required=True)
    p.add_argument("--out-ssl", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, help="common dimension (default: SF dim)")
    p.add_argument("--model", help="checkpoint holding align parameters")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("fuse", help="fuse two aligned streams")
    p.add_argument("--sf", required=True)
    p.add_argument("--ssl", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="toy-model checkpoint to take fusion parameters from")
    p.add_argument("--config", help="JSON file of fusion.* keys")
    _add_fusion_flags(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("gradcheck", help="certify analytic gradients against central differences")
    p.add_argument("--variant", required=True, choices=list(diff.CHECKABLE) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--frames", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--theta", choices=[t.value for t in F.Theta])
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="train a fusion front-end on the synthetic task")
    p.add_argument("--variant", required=True, choices=[v.value for v in F.Variant])
    p.add_argument("--informative", required=True, choices=list(tt.INFORMATIVE))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--data-out", help="also write the generated dataset container")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--snr", type=float, default=1.0)
    p.add_argument("--n-utts", type=int, default=64)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--classes", type=int, default=2)
    _add_fusion_flags(p, with_variant=False)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("analyze-gates", help="CSV summary of normalized MoE gate weights")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--per", choices=["utterance", "corpus"], default="corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze_gates)

    p = sub.add_parser("cerr", help="character error reduction rate")
    p.add_argument("--base", type=float, required=True)
    p.add_argument("--ssl", type=float, required=True)
    p.set_defaults(func=cmd_cerr)
    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        code = args.func(args)
        return EXIT_OK if code is None else code
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (FuseFrontError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())
