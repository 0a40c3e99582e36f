"""Operator command line.

Exit codes are stable for scripting: 0 success, 1 usage error, 2 data or
format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .backbone import toy_backbone, vgg16_from_archive
from .codebook import resolve_blend
from .errors import (ArchiveError, CodebookError, ConfigError, ContractError,
                     ImageCodecError, NonFiniteError, PaddingRequiredError,
                     ShapeError, TrainingAborted)
from .network import NetworkConfig, Stylizer, accounting
from .storage import load_codebook, load_image, save_codebook, save_image
from .training import TrainConfig, train_general, train_incremental

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

INCREMENTAL_ITERATIONS_DEFAULT = 3000  # new styles converge in about 3k steps

_DATA_ERRORS = (ArchiveError, CodebookError, ImageCodecError, ConfigError,
                ShapeError, ContractError, PaddingRequiredError, FileNotFoundError,
                IsADirectoryError, NotADirectoryError, PermissionError,
                json.JSONDecodeError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def slugify(name: str) -> str:
    slug = "".join(c if c.isalnum() else "-" for c in name.lower()).strip("-")
    while "--" in slug:
        slug = slug.replace("--", "-")
    if not slug:
        raise UsageError(f"cannot derive a style id from name {name!r}")
    return slug


def _parse_alpha(value) -> float:
    alpha = float(value)
    if not np.isfinite(alpha) or not 0.0 <= alpha <= 1.0:
        raise UsageError(f"--alpha must be a finite number in [0, 1], got {value}")
    return alpha


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(part) for part in text.lower().split("x"))
        return h, w
    except ValueError:
        raise UsageError(f"--input must look like 512x512, got {text!r}") from None


def _parse_weights(text: str) -> list[tuple[str, float]]:
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise UsageError(f"--weights entries must be id=w, got {chunk!r}")
        sid, w = chunk.split("=", 1)
        try:
            pairs.append((sid.strip(), float(w)))
        except ValueError:
            raise UsageError(f"bad weight {w!r} for style {sid!r}") from None
    if not pairs:
        raise UsageError("--weights must name at least one style")
    return pairs


def _load_dir_images(path: str) -> dict[str, np.ndarray]:
    if not os.path.isdir(path):
        raise NotADirectoryError(f"{path} is not a directory")
    images = {}
    for entry in sorted(os.listdir(path)):
        if entry.lower().endswith(".png"):
            images[os.path.splitext(entry)[0]] = load_image(os.path.join(path, entry))
    if not images:
        raise ConfigError(f"no .png images found in {path}")
    return images


def _load_train_file(path: str) -> tuple[NetworkConfig, TrainConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    network = NetworkConfig.from_dict(doc.get("network", {}))
    train = TrainConfig.from_dict(doc.get("train", {}))
    return network, train


def _load_network_config(ref: str) -> tuple[NetworkConfig, dict]:
    """A config file path, or the name of a shipped config."""
    if ref == "paper-scale":
        from .configs import paper_scale
        pinned = paper_scale()
        return pinned.network, pinned.budget
    with open(ref, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    network = NetworkConfig.from_dict(doc.get("network", doc))
    return network, doc.get("budget", {})


def _load_pair(model_path: str, codebook_path: str, allow_mismatch: bool):
    model = Stylizer.load(model_path)
    cb = load_codebook(codebook_path)
    if cb.network_fingerprint and cb.network_fingerprint != model.fingerprint():
        if not allow_mismatch:
            raise CodebookError(
                f"codebook {codebook_path} was trained against different weights "
                f"({cb.network_fingerprint[:12]} vs {model.fingerprint()[:12]}); "
                "pass --allow-fingerprint-mismatch to override")
    if cb.style_dim != model.config.style_dim:
        raise CodebookError(
            f"codebook style_dim {cb.style_dim} != model style_dim {model.config.style_dim}")
    return model, cb


def _pick_backbone(path: str | None, dtype=np.float32):
    if path:
        return vgg16_from_archive(path)
    return toy_backbone(dtype=dtype)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    network_cfg, train_cfg = _load_train_file(args.config)
    contents = list(_load_dir_images(args.contents).values())
    styles = _load_dir_images(args.styles)
    model = Stylizer.initialize(network_cfg, seed=train_cfg.seed)
    backbone = _pick_backbone(args.backbone)
    os.makedirs(args.out, exist_ok=True)
    codebook, report = train_general(train_cfg, contents, styles, model, backbone,
                                     out_dir=args.out)
    last = report.records[-1] if report.records else {}
    print(f"trained {train_cfg.iterations} iterations in {report.wall_clock_s:.1f}s; "
          f"final total loss {last.get('total', float('nan')):.4f}")
    print(f"model fingerprint {report.final_digest}")
    print(f"wrote {args.out}/model.sta, codebook.json, train_log.jsonl")
    return EXIT_OK


def cmd_add_style(args) -> int:
    model, cb = _load_pair(args.model, args.codebook, args.allow_fingerprint_mismatch)
    style_id = slugify(args.name)
    image = load_image(args.style)
    if args.contents:
        contents = list(_load_dir_images(args.contents).values())
    else:
        from .synthetic import content_pool
        contents = content_pool(seed=17, count=8, size=48)
    cfg = TrainConfig(iterations=args.iterations, batch_size=2, content_crop=32,
                      lr_halve_every=max(1, args.iterations // 4), seed=args.seed,
                      incremental=True, geo_mode="sample1",
                      checkpoint_every=max(1, args.iterations))
    backbone = _pick_backbone(args.backbone)
    merged, report = train_incremental(cfg, contents, {style_id: image}, model, cb,
                                       backbone, style_names={style_id: args.name})
    save_codebook(merged, args.out)
    print(f"added style {style_id!r} in {report.wall_clock_s:.1f}s; "
          f"final loss {report.per_style_loss.get(style_id, float('nan')):.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_stylize(args) -> int:
    alpha = _parse_alpha(args.alpha)
    model, cb = _load_pair(args.model, args.codebook, args.allow_fingerprint_mismatch)
    rep = cb.resolve(args.style)
    values, _ = resolve_blend(cb, [(rep.id, 1.0)], alpha)
    image = load_image(args.content)
    out = model.stylize_any_size(image, values)
    save_image(args.out, out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_interpolate(args) -> int:
    cb = load_codebook(args.codebook)
    weights = _parse_weights(args.weights)
    resolved = [(cb.resolve(sid).id, w) for sid, w in weights]
    alpha = _parse_alpha(args.alpha)
    values, normalized = resolve_blend(cb, resolved, alpha)
    print(json.dumps({
        "values": [float(v) for v in values],
        "weights_normalized": normalized,
        "alpha": alpha,
    }))
    return EXIT_OK


def cmd_info(args) -> int:
    network_cfg, budget = _load_network_config(args.config)
    size = _parse_size(args.input)
    acc = accounting(network_cfg, size)
    rows = [
        ("params total", acc["params_total"] / 1e6, "M", budget.get("params_m")),
        ("params OIP", acc["params_oip"] / 1e6, "M", budget.get("oip_m")),
        ("FLOPs", acc["flops"] / 1e9, "G", budget.get("flops_g")),
    ]
    print(f"input {size[0]}x{size[1]}  (per-style storage: "
          f"{acc['per_style_stored_floats']} floats)")
    for label, value, unit, target in rows:
        line = f"{label:<14} {value:8.3f} {unit}"
        if target is not None:
            line += f"   (budget {target:g} {unit})"
        print(line)
    if args.latency:
        model = Stylizer.initialize(network_cfg, seed=0)
        img = np.full((3, size[0], size[1]), 0.5, dtype=np.float32)
        values = np.ones(network_cfg.style_dim, dtype=np.float32)
        cache: dict = {}
        model.stylize_array(img, values, cache)  # warmup and fill cache
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            model.stylize_array(img, values, cache)
            times.append((time.perf_counter() - t0) * 1e3)
        print(f"latency        {min(times):8.1f} ms   (best of 3, cached style)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .verification import full_gradcheck
    result = full_gradcheck(seed=args.seed, stride=args.stride)
    status = "PASS" if result.max_rel_error < args.tolerance else "FAIL"
    print(f"gradcheck {status}: max relative error {result.max_rel_error:.3e} "
          f"(worst {result.worst_param}) over {result.checked} values "
          f"in {result.seconds:.1f}s")
    return EXIT_OK if status == "PASS" else EXIT_NUMERIC


def cmd_serve(args) -> int:
    from .service import StudioService, run_server
    model, cb = _load_pair(args.model, args.codebook, args.allow_fingerprint_mismatch)
    contents = list(_load_dir_images(args.contents).values()) if args.contents else None
    backbone = _pick_backbone(args.backbone)
    service = StudioService(model, cb, backbone=backbone, contents=contents,
                            job_iterations=args.job_iterations)
    port = int(os.environ.get("STYLESHIFT_PORT", args.port))
    run_server(service, port=port, host=args.host, ui_dir=args.ui)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="styleshift",
                     description="Multi-style image stylization with pluggable style codes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and codebook from image directories")
    p.add_argument("--contents", required=True)
    p.add_argument("--styles", required=True)
    p.add_argument("--config", required=True, help="JSON file with network/train sections")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", help="tensor archive with VGG-16 weights (default: hermetic test stack)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("add-style", help="learn one new style against frozen weights")
    p.add_argument("--model", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--style", required=True, help="style image (PNG)")
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True, help="path for the extended codebook")
    p.add_argument("--contents", help="directory of content PNGs (default: procedural pool)")
    p.add_argument("--iterations", type=int, default=INCREMENTAL_ITERATIONS_DEFAULT)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--backbone")
    p.add_argument("--allow-fingerprint-mismatch", action="store_true")
    p.set_defaults(func=cmd_add_style)

    p = sub.add_parser("stylize", help="stylize one image with a stored style")
    p.add_argument("--model", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True, help="style id or name")
    p.add_argument("--alpha", default="1.0", help="stylization strength in [0, 1]")
    p.add_argument("--out", required=True)
    p.add_argument("--allow-fingerprint-mismatch", action="store_true")
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("interpolate", help="blend stored styles into one vector")
    p.add_argument("--codebook", required=True)
    p.add_argument("--weights", required=True, help='comma list like "id=0.3,id=0.7"')
    p.add_argument("--alpha", default="1.0")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("info", help="parameter/FLOP accounting for a config")
    p.add_argument("--config", required=True, help="config JSON path or 'paper-scale'")
    p.add_argument("--input", default="512x512")
    p.add_argument("--latency", action="store_true", help="also measure one stylize pass")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full gradient")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--stride", type=int, default=1,
                   help="check every Nth value (1 = all)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="run the HTTP stylization service")
    p.add_argument("--model", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--contents", help="content pool for add-style jobs")
    p.add_argument("--job-iterations", type=int, default=INCREMENTAL_ITERATIONS_DEFAULT)
    p.add_argument("--ui", help="directory of static studio files to serve at /")
    p.add_argument("--backbone")
    p.add_argument("--allow-fingerprint-mismatch", action="store_true")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # -h/--help
        return 0 if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, TrainingAborted) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
