"""Command-line surface.

One binary with subcommands covering the whole pipeline:

    synth-data  build a synthetic blob corpus (trajectories + feature grids)
    preprocess  raw recordings -> trajectory store + stimulus split
    train       fit the denoiser, write checkpoint + loss log
    sample      generate trajectories per stimulus with the fast sampler
    extract     trajectories -> scanpath file
    saliency    scanpaths -> per-stimulus saliency maps (PFM + PGM)
    evaluate    best/mean metric report, or saliency scores with --sal-pred
    stats       saccade amplitude/direction/turn histograms

Progress goes to stderr, data to files; `--json` prints a machine-readable
summary to stdout.  Relative input paths falling outside the working
directory are retried under $GAZEDIFF_DATA_DIR.  Exit code 0 means no
per-item failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import data, diffusion, events, features, metrics, salmetrics, synth
from .config import ConfigError, load_config
from .denoiser import TrajectoryDenoiser


def log(msg):
    print(msg, file=sys.stderr)


def resolve_input(path):
    """Relative inputs missing from the CWD are retried under
    GAZEDIFF_DATA_DIR."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    root = os.environ.get("GAZEDIFF_DATA_DIR")
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def stimulus_seed(seed, stimulus_id):
    """Stable per-stimulus RNG seed, independent of worker order."""
    return [int(seed), zlib.crc32(stimulus_id.encode("utf-8"))]


def parse_pair(text):
    vals = [int(v) for v in str(text).replace("x", ",").split(",")]
    if len(vals) == 1:
        vals = vals * 2
    return (vals[0], vals[1])


# ---------------------------------------------------------------------------
# Shared data plumbing


def load_grids_dir(path, model_cfg):
    """Load every .gzfg under `path`, standardized and resampled to the
    model's patch resolution."""
    grids = {}
    for f in sorted(Path(path).glob("*.gzfg")):
        g = features.load_grid(f)
        if (g.height, g.width) != tuple(model_cfg.patch_hw):
            g = features.resample_grid(g, model_cfg.patch_hw)
        grids[g.stimulus_id] = g
    return grids


def group_by_stimulus(scanpaths):
    by = {}
    for sp in scanpaths:
        by.setdefault(sp.stimulus_id, []).append(sp)
    return by


def load_sampled_trajectories(path):
    """A trajectory store file, or a directory of per-stimulus
    subdirectories of single-record stores."""
    p = Path(path)
    if p.is_file():
        return data.load_store(p)
    out = []
    for f in sorted(p.glob("**/*.gztr")):
        out.extend(data.load_store(f))
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_synth_data(args):
    spec = synth.SynthSpec(
        n_stimuli=args.n_stimuli,
        per_stimulus=args.per_stimulus,
        length=args.length,
        sigma=args.sigma,
        grid_hw=parse_pair(args.grid),
        feat_depth=args.feat_depth,
        style=args.style,
        seed=args.seed,
    )
    ds = synth.make_dataset(spec)
    out = Path(args.out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    data.save_store(out / "trajectories.gztr", ds.trajectories)
    for g in ds.grids:
        features.save_grid(out / "features" / f"{g.stimulus_id}.gzfg", g)
    ds.save_meta(out / "dataset.json")
    log(f"wrote {len(ds.trajectories)} trajectories over {spec.n_stimuli} stimuli to {out}")
    return {"trajectories": len(ds.trajectories), "stimuli": spec.n_stimuli, "out": str(out)}, 0


def cmd_preprocess(args):
    manifest = data.Manifest.from_json(resolve_input(args.manifest))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kept, rejected, failures = [], 0, 0
    root = Path(resolve_input(args.manifest)).parent
    for entry in manifest.entries:
        for rec_path in entry.recordings:
            rp = Path(rec_path)
            if not rp.is_absolute():
                rp = root / rp
            try:
                rec = data.read_recording(rp, entry.stimulus_id, rate_hz=manifest.rate_hz)
                traj = data.preprocess(rec, entry.size)
            except (OSError, ValueError) as e:
                log(f"error: {rp}: {e}")
                failures += 1
                continue
            if traj is None:
                rejected += 1
            else:
                kept.append(traj)
    data.save_store(out / "trajectories.gztr", kept)
    stimuli = sorted({t.stimulus_id for t in kept})
    if len(stimuli) >= 2:
        data.split(stimuli, seed=args.seed, test_fraction=args.test_fraction).to_json(out / "split.json")
    log(f"kept {len(kept)}, rejected {rejected} (too short), {failures} errors")
    return {"kept": len(kept), "rejected_short": rejected, "out": str(out)}, failures


def _train_config(args):
    overrides = {}
    for key in ("seed", "steps", "lr", "batch", "t_diff", "cfg_scale", "uncond_dropout", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    cfg_path = resolve_input(args.config) if args.config else None
    return load_config(cfg_path, overrides)


def cmd_train(args):
    cfg = _train_config(args)
    if not args.data and not (args.store and args.features):
        raise ConfigError("train needs --data DIR or both --store and --features")
    store = resolve_input(args.store or (Path(args.data) / "trajectories.gztr"))
    feat_dir = resolve_input(args.features or (Path(args.data) / "features"))
    trajs = data.load_store(store)
    if args.split:
        train_ids = set(data.DatasetSplit.from_json(resolve_input(args.split)).train_stimuli)
        trajs = [t for t in trajs if t.stimulus_id in train_ids]
    if not trajs:
        raise ConfigError("no training trajectories")
    lengths = {t.length for t in trajs}
    if lengths != {cfg.model.length}:
        raise ConfigError(f"store lengths {sorted(lengths)} do not match model length {cfg.model.length}")
    grids = load_grids_dir(feat_dir, cfg.model)
    missing = sorted({t.stimulus_id for t in trajs} - set(grids))
    if missing:
        raise ConfigError(f"missing feature grids for stimuli: {missing}")

    model = TrajectoryDenoiser(cfg.model, seed=cfg.seed)
    schedule = diffusion.DiffusionSchedule.linear(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    guidance = diffusion.GuidanceConfig(scale=cfg.cfg_scale, uncond_dropout=cfg.uncond_dropout)
    trainer = diffusion.Trainer(model, schedule, lr=cfg.lr, guidance=guidance, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    coords = np.stack([t.coords for t in trajs])
    ids = [t.stimulus_id for t in trajs]
    n_steps = cfg.steps if not cfg.epochs else cfg.epochs * max(1, len(trajs) // cfg.batch)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    losses = []
    for step in range(n_steps):
        pick = rng.integers(0, len(trajs), size=min(cfg.batch, len(trajs)))
        batch = coords[pick]
        batch_grids = [grids[ids[i]] for i in pick]
        losses.append(trainer.step(batch, batch_grids))
        if (step + 1) % max(1, n_steps // 20) == 0:
            recent = float(np.mean(losses[-50:]))
            log(f"step {step + 1}/{n_steps} loss {recent:.4f}")
    model.save(out)
    with open(f"{out}.cfg", "w") as fh:
        fh.write(cfg.to_text())
    with open(f"{out}.loss.csv", "w") as fh:
        fh.write("step,loss\n")
        fh.writelines(f"{i},{v:.6f}\n" for i, v in enumerate(losses))
    log(f"trained {n_steps} steps, final loss {np.mean(losses[-20:]):.4f} -> {out}")
    return {"steps": n_steps, "final_loss": float(np.mean(losses[-20:])), "checkpoint": str(out)}, 0


def cmd_sample(args):
    ckpt = resolve_input(args.ckpt)
    cfg = load_config(Path(f"{ckpt}.cfg") if Path(f"{ckpt}.cfg").exists() else None)
    if args.cfg_scale is not None:
        cfg.cfg_scale = args.cfg_scale
    if args.ddim_steps is not None:
        cfg.ddim_steps = args.ddim_steps
    seed = args.seed if args.seed is not None else cfg.seed
    model = TrajectoryDenoiser(cfg.model, seed=0)
    model.load(ckpt)
    schedule = diffusion.DiffusionSchedule.linear(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    grids = load_grids_dir(resolve_input(args.features), cfg.model)
    if args.stimuli:
        wanted = args.stimuli.split(",")
    elif args.split:
        wanted = data.DatasetSplit.from_json(resolve_input(args.split)).test_stimuli
    else:
        wanted = sorted(grids)
    out = Path(args.out)
    failures = 0
    written = 0

    def run_one(sid):
        grid = grids.get(sid)
        if grid is None:
            return sid, None
        draws = diffusion.sample_ddim(
            model,
            schedule,
            grid,
            steps=cfg.ddim_steps,
            seed=stimulus_seed(seed, sid),
            n=args.n,
            cfg_scale=cfg.cfg_scale,
        )
        return sid, draws

    with ThreadPoolExecutor(max_workers=max(1, args.workers or cfg.workers)) as pool:
        results = list(pool.map(run_one, sorted(wanted)))
    for sid, draws in results:
        if draws is None:
            log(f"skip {sid}: no feature grid")
            failures += 1
            continue
        sdir = out / sid
        sdir.mkdir(parents=True, exist_ok=True)
        for k in range(draws.shape[0]):
            traj = data.Trajectory(coords=draws[k].astype(np.float32), stimulus_id=sid)
            data.save_store(sdir / f"{k:03d}.gztr", [traj])
            written += 1
    log(f"sampled {written} trajectories for {len(wanted) - failures} stimuli")
    return {"written": written, "stimuli": len(wanted) - failures, "skipped": failures}, failures


def cmd_extract(args):
    trajs = load_sampled_trajectories(resolve_input(args.traj))
    frame = parse_pair(args.frame)
    scanpaths = []
    empty = 0
    for t in trajs:
        px = data.denormalize(t.coords, frame)
        sp = events.to_scanpath(
            px, args.rate, t.stimulus_id,
            disp_thresh=args.disp_thresh, min_fix_duration=args.min_dur,
        )
        if len(sp) == 0:
            empty += 1
        scanpaths.append(sp)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    events.save_scanpaths(args.out, scanpaths)
    n_fix = sum(len(sp) for sp in scanpaths)
    log(f"extracted {n_fix} fixations over {len(scanpaths)} trajectories ({empty} without events)")
    return {"scanpaths": len(scanpaths), "fixations": n_fix, "empty": empty}, 0


def cmd_saliency(args):
    scanpaths = events.load_scanpaths(resolve_input(args.scanpaths))
    dims = parse_pair(args.dims)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    written = 0
    for sid, group in sorted(group_by_stimulus(scanpaths).items()):
        try:
            sal = events.build_saliency(group, dims, sigma=args.sigma)
        except ValueError as e:
            log(f"skip {sid}: {e}")
            failures += 1
            continue
        events.save_saliency_pfm(out / f"{sid}.pfm", sal)
        events.save_saliency_pgm(out / f"{sid}.pgm", sal)
        written += 1
    return {"maps": written, "skipped": failures}, failures


def _scanpath_metric_fns(frame):
    k = metrics.TDE_K
    return {
        "levenshtein": lambda a, b: float(metrics.levenshtein(a, b, frame)),
        "dtw": metrics.dtw,
        "frechet": metrics.frechet,
        # Short scanpaths shrink the window so every pair stays scorable.
        "tde": lambda a, b: metrics.tde(a, b, k=max(1, min(k, len(a), len(b)))),
    }


def cmd_evaluate(args):
    if args.sal_pred:
        if not (args.sal_gt and args.fixations):
            raise ConfigError("saliency evaluation needs --sal-pred, --sal-gt and --fixations")
        return _evaluate_saliency(args)
    if not (args.gt and args.gen):
        raise ConfigError("evaluate needs --gt and --gen scanpath files (or the --sal-* group)")
    frame = parse_pair(args.frame)
    gt = group_by_stimulus(events.load_scanpaths(resolve_input(args.gt)))
    gen = group_by_stimulus(events.load_scanpaths(resolve_input(args.gen)))
    shared = sorted(set(gt) & set(gen))
    failures = len(set(gt) ^ set(gen))
    for sid in sorted(set(gt) ^ set(gen)):
        log(f"skip {sid}: present on one side only")
    report = metrics.MetricReport()
    gt_pts = {sid: [sp.points() for sp in gt[sid] if len(sp)] for sid in shared}
    gen_pts = {sid: [sp.points() for sp in gen[sid] if len(sp)] for sid in shared}
    usable = [sid for sid in shared if gt_pts[sid] and gen_pts[sid]]
    summary = {}
    for name, fn in _scanpath_metric_fns(frame).items():
        best, mean, _ = metrics.aggregate(
            {s: gt_pts[s] for s in usable}, {s: gen_pts[s] for s in usable}, fn, name, report
        )
        summary[name] = {"best": best, "mean": mean}
    if args.traj_gt and args.traj_gen:
        tg = group_by_stimulus(load_sampled_trajectories(resolve_input(args.traj_gt)))
        tn = group_by_stimulus(load_sampled_trajectories(resolve_input(args.traj_gen)))
        both = sorted(set(tg) & set(tn))
        to_px = lambda ts: [data.denormalize(t.coords, frame) for t in ts]
        gt_traj = {s: to_px(tg[s]) for s in both}
        gen_traj = {s: to_px(tn[s]) for s in both}
        for name, fn in _scanpath_metric_fns(frame).items():
            best, mean, _ = metrics.aggregate(gt_traj, gen_traj, fn, f"traj_{name}", report)
            summary[f"traj_{name}"] = {"best": best, "mean": mean}
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(f"{prefix}.csv", dataset=args.dataset)
    with open(f"{prefix}.json", "w") as fh:
        json.dump({"dataset": args.dataset, "images": len(usable), "overall": summary}, fh, indent=1)
    log(f"evaluated {len(usable)} images -> {prefix}.csv")
    return {"images": len(usable), "overall": summary}, failures


def _evaluate_saliency(args):
    pred_dir = Path(resolve_input(args.sal_pred))
    gt_dir = Path(resolve_input(args.sal_gt))
    fix_by = group_by_stimulus(events.load_scanpaths(resolve_input(args.fixations)))
    dims = parse_pair(args.dims)
    rows = []
    failures = 0
    for pfm in sorted(pred_dir.glob("*.pfm")):
        sid = pfm.stem
        gt_path = gt_dir / pfm.name
        if not gt_path.exists() or sid not in fix_by:
            log(f"skip {sid}: missing ground truth map or fixations")
            failures += 1
            continue
        pred = events.load_saliency_pfm(pfm)
        gt = events.load_saliency_pfm(gt_path)
        mask = events.fixation_mask(fix_by[sid], dims)
        scores = salmetrics.saliency_metrics(pred, gt, mask)
        rows.append((sid, scores))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{prefix}.csv", "w") as fh:
        fh.write("dataset,image,metric,value\n")
        for sid, scores in rows:
            for metric, value in scores.as_dict().items():
                fh.write(f"{args.dataset},{sid},{metric},{value:.6f}\n")
    overall = {}
    if rows:
        keys = rows[0][1].as_dict().keys()
        overall = {k: float(np.mean([r[1].as_dict()[k] for r in rows])) for k in keys}
    with open(f"{prefix}.json", "w") as fh:
        json.dump({"dataset": args.dataset, "images": len(rows), "overall": overall}, fh, indent=1)
    return {"images": len(rows), "overall": overall}, failures


def cmd_stats(args):
    scanpaths = events.load_scanpaths(resolve_input(args.scanpaths))
    st = events.scanpath_stats(scanpaths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def write_hist(name, counts, edges):
        with open(out / f"{name}.csv", "w") as fh:
            fh.write("bin_left,bin_right,count\n")
            for i, c in enumerate(counts):
                fh.write(f"{edges[i]:.4f},{edges[i + 1]:.4f},{int(c)}\n")

    amp_counts, amp_edges = events.amplitude_histogram(st)
    dir_counts, dir_edges = events.angle_histogram(st.directions_deg)
    turn_counts, turn_edges = events.angle_histogram(st.inter_saccade_deg)
    write_hist("amplitude", amp_counts, amp_edges)
    write_hist("direction", dir_counts, dir_edges)
    write_hist("inter_saccade", turn_counts, turn_edges)
    p0, p180, mean = events.horizontal_bias_peaks(dir_counts)
    log(f"saccades: {len(st.amplitudes_px)}, direction peaks 0deg={p0:.0f} 180deg={p180:.0f} mean={mean:.1f}")
    return {
        "saccades": int(len(st.amplitudes_px)),
        "direction_peak_0": float(p0),
        "direction_peak_180": float(p180),
        "direction_mean_bin": float(mean),
    }, 0


# ---------------------------------------------------------------------------
# Parser


def build_parser():
    p = argparse.ArgumentParser(prog="gazediff", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", action="store_true", help="print a JSON summary to stdout")
        sp.add_argument("--workers", type=int, default=None, help="parallel workers for per-stimulus work")

    sp = sub.add_parser("synth-data", help="build a synthetic blob corpus")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-stimuli", type=int, default=2)
    sp.add_argument("--per-stimulus", type=int, default=64)
    sp.add_argument("--length", type=int, default=64)
    sp.add_argument("--sigma", type=float, default=0.15)
    sp.add_argument("--grid", default="8,8")
    sp.add_argument("--feat-depth", type=int, default=8)
    sp.add_argument("--style", choices=("dwell", "freeview"), default="dwell")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_synth_data)

    sp = sub.add_parser("preprocess", help="raw recordings -> trajectory store + split")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--test-fraction", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_preprocess)

    sp = sub.add_parser("train", help="fit the denoiser")
    common(sp)
    sp.add_argument("--data", help="directory holding trajectories.gztr and features/")
    sp.add_argument("--store", help="explicit trajectory store path")
    sp.add_argument("--features", help="explicit feature directory")
    sp.add_argument("--split", help="restrict to the train side of this split file")
    sp.add_argument("--config", help="key-value config file")
    sp.add_argument("--out", required=True, help="checkpoint path to write")
    for key, typ in (("seed", int), ("steps", int), ("batch", int),
                     ("t_diff", int), ("lr", float), ("cfg_scale", float),
                     ("uncond_dropout", float)):
        sp.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("sample", help="generate trajectories per stimulus")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--stimuli", help="comma-separated stimulus ids")
    sp.add_argument("--split", help="use the test side of this split file")
    sp.add_argument("--n", type=int, default=15, help="trajectories per stimulus")
    sp.add_argument("--ddim-steps", dest="ddim_steps", type=int, default=None)
    sp.add_argument("--cfg-scale", dest="cfg_scale", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("extract", help="trajectories -> scanpaths")
    common(sp)
    sp.add_argument("--traj", required=True, help="store file or sample output directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--rate", type=float, default=240.0)
    sp.add_argument("--frame", default="224,224")
    sp.add_argument("--disp-thresh", dest="disp_thresh", type=float, default=events.DISP_THRESH_PX)
    sp.add_argument("--min-dur", dest="min_dur", type=float, default=events.MIN_FIX_DURATION_S)
    sp.set_defaults(fn=cmd_extract)

    sp = sub.add_parser("saliency", help="scanpaths -> saliency maps")
    common(sp)
    sp.add_argument("--scanpaths", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dims", default="224,224")
    sp.add_argument("--sigma", type=float, default=events.SALIENCY_SIGMA_PX)
    sp.set_defaults(fn=cmd_saliency)

    sp = sub.add_parser("evaluate", help="metric report (scanpath / trajectory / saliency)")
    common(sp)
    sp.add_argument("--gt", help="ground-truth scanpath file")
    sp.add_argument("--gen", help="generated scanpath file")
    sp.add_argument("--traj-gt", dest="traj_gt", help="continuous ground-truth store")
    sp.add_argument("--traj-gen", dest="traj_gen", help="continuous generated store/dir")
    sp.add_argument("--sal-pred", dest="sal_pred", help="predicted saliency map directory")
    sp.add_argument("--sal-gt", dest="sal_gt", help="ground-truth saliency map directory")
    sp.add_argument("--fixations", help="scanpath file with ground-truth fixations")
    sp.add_argument("--frame", default="224,224")
    sp.add_argument("--dims", default="224,224")
    sp.add_argument("--dataset", default="default")
    sp.add_argument("--out", required=True, help="report path prefix")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("stats", help="saccade statistics histograms")
    common(sp)
    sp.add_argument("--scanpaths", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_stats)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        summary, failures = args.fn(args)
    except (ConfigError, OSError, ValueError) as e:
        log(f"error: {e}")
        if getattr(args, "json", False):
            print(json.dumps({"command": args.command, "ok": False, "error": str(e)}))
        return 2
    if getattr(args, "json", False):
        print(json.dumps({"command": args.command, "ok": failures == 0, "failures": failures, **summary}))
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
