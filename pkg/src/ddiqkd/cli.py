"""Command-line front end: simulate, distill, sweep, finite-key, attack.

All randomness is governed by one --seed; per-point sweep seeds derive from
it by point index, so rows are reproducible independent of execution order.
Config and IO failures exit with status 2; computational results (including
a zero-length key) exit with status 0.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import finitekey, postproc, ratemodel
from .adversary import (
    attack_detection_rate,
    countermeasure_statistics,
    run_blinding_attack,
    run_siphoning_attack,
)
from .config import ConfigError, ExperimentConfig
from .protocol import (
    KeyBlock,
    KeyRole,
    Party,
    Transcript,
    qber_z,
    run_session,
    sift,
    tallies_from_transcript,
)

SWEEP_SCHEMA = "# ddiqkd-sweep-v1 attenuation_db,distance_km,skr_bps,qber_z,qber_x,ell,mu_opt"
DISTILL_SCHEMA = "# ddiqkd-distill-v1 block_id n qber_z disclosed_bits f_ec ell attenuation_db skr_bps"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddiqkd",
        description="DDI-QKD simulator, key distillation, and attack bench",
    )
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("simulate", help="run a seeded session and write transcript + tallies")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("distill", help="sift, reconcile, bound, and amplify a stored transcript")
    p.add_argument("--config", required=True)
    p.add_argument("--transcript", required=True, help="transcript file from simulate")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("sweep", help="rate sweep over attenuation/distance with per-point mu optimization")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default="sweep.csv", help="output CSV name")
    p.add_argument(
        "--asymptotic",
        action="store_true",
        help="report infinite-block rates (no finite-key statistics)",
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("finite-key", help="evaluate the key-length bound on a logged tally record")
    p.add_argument("--input", required=True, help="flat key=value finite-key record")
    p.set_defaults(func=cmd_finite_key)

    p = sub.add_parser("attack", help="run an attack scenario and print the countermeasure verdict")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_attack)
    return parser


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    return cfg


def _write_tallies(tallies, path) -> None:
    lines = ["# alice bob slot count"]
    for a in range(4):
        for b in range(4):
            for s in range(6):
                lines.append(f"{a} {b} {s} {tallies.counts[a, b, s]}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    if cfg.scenario == "honest":
        result = run_session(
            cfg.protocol(), cfg.source, cfg.channel, cfg.detectors(), cfg.seed
        )
        tallies, transcript = result.tallies, result.transcript
        summary = {
            "scenario": "honest",
            "rounds": cfg.rounds,
            "detections": int(tallies.detections().sum()),
            "double_clicks": tallies.double_click_total(),
        }
    elif cfg.scenario == "siphoning":
        res = run_siphoning_attack(cfg.siphoning, cfg.protocol(), cfg.seed)
        tallies, transcript = res.tallies, res.transcript
        s = sift(transcript)
        agree = _eve_agreement(res, s)
        summary = {
            "scenario": "siphoning",
            "rounds": cfg.rounds,
            "conclusive_fraction": attack_detection_rate(tallies),
            "eve_agreement": agree,
            "sifted_qber": float(np.mean(s.alice_key.bits != s.bob_key.bits))
            if len(s.alice_key)
            else 0.0,
        }
    else:
        detectors = tuple(d.blinded() for d in cfg.detectors())
        tallies = run_blinding_attack(cfg.blinding, cfg.protocol(), detectors, cfg.seed)
        transcript = None
        summary = {
            "scenario": "blinding",
            "rounds": cfg.rounds,
            "double_clicks": tallies.double_click_total(),
            "detections": int(tallies.detections().sum()),
        }

    if transcript is not None:
        transcript.save(out / "transcript.txt")
    _write_tallies(tallies, out / "tallies.txt")
    for key, value in summary.items():
        print(f"{key} = {value}")
    return 0


def _eve_agreement(res, sifted) -> float:
    """Fraction of accepted key rounds where Eve's record equals the key bit."""
    detected = res.transcript.outcome_slot != 5
    keep = detected & (res.transcript.alice < 2) & (res.transcript.bob < 2)
    if not keep.any():
        return 0.0
    alice_bits = np.array([0, 1, 0, 1], dtype=np.uint8)[res.transcript.alice[keep]]
    return float(np.mean(res.eve_bits[keep] == alice_bits))


def cmd_distill(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    transcript = Transcript.load(args.transcript)
    tallies = tallies_from_transcript(transcript)
    sifted = sift(transcript)
    n = len(sifted.alice_key)
    rng = np.random.default_rng(cfg.seed)
    att_db = cfg.channel.fiber_loss_db_per_km * cfg.channel.distance_km

    if n == 0:
        print("ell = 0 (no sifted key: no matched-Z detections)")
        return 0

    e_z = qber_z(tallies)
    rec = postproc.cascade_reconcile(
        sifted.alice_key, sifted.bob_key, max(e_z, 1.0 / n), rng
    )
    ver = postproc.verify_keys(rec.alice, rec.bob, cfg.eps_cor, rng)
    if not ver.passed:
        print("verification failed; block rejected")
        return 0

    inp = finitekey.FiniteKeyInput.from_tallies(
        tallies, cfg.source.mu, cfg.eps_sec, cfg.eps_cor, leak_ec=rec.disclosed_bits
    )
    try:
        res = finitekey.evaluate(inp)
        ell = min(res.ell, n)
    except finitekey.EstimationError as exc:
        print(f"ell = 0 (bound not evaluable: {exc})")
        return 0

    duration = len(transcript) / cfg.source.pulse_rate
    skr = ell / duration if duration > 0 else 0.0
    f_ec = rec.efficiency if math.isfinite(rec.efficiency) else 0.0
    log_line = (
        f"0 {n} {e_z:.6g} {rec.disclosed_bits + ver.tag_bits} {f_ec:.4f} "
        f"{ell} {att_db:.3g} {skr:.6g}"
    )
    (out / "distillation.log").write_text(DISTILL_SCHEMA + "\n" + log_line + "\n")

    if ell > 0:
        spec = postproc.HashSpec.random(rng, n, ell)
        secret_a = postproc.privacy_amplify(rec.alice, spec)
        secret_b = postproc.privacy_amplify(rec.bob, spec)
        postproc.save_key_block(secret_a, out / "secret_alice.key")
        postproc.save_key_block(secret_b, out / "secret_bob.key")
        print(f"ell = {ell}")
        print(f"skr_bps = {skr:.6g}")
    else:
        print("ell = 0 (finite-key penalties consume the block; not a failure)")
    print(f"qber_z = {e_z:.6g}")
    print(f"f_ec = {f_ec:.4f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    points = cfg.sweep_points()
    rows = []
    comments = []
    for i, att in enumerate(points):
        channel = replace(
            cfg.channel,
            distance_km=att / cfg.channel.fiber_loss_db_per_km,
        )
        model = ratemodel.RateModel(
            protocol=cfg.protocol(),
            source=cfg.source,
            channel=channel,
            detector=cfg.detector,
            eps_sec=cfg.eps_sec,
            eps_cor=cfg.eps_cor,
        )
        try:
            pt = ratemodel.evaluate_point(
                model, cfg.mu_grid, cfg.block_size, asymptotic=args.asymptotic
            )
            rows.append(
                f"{pt.attenuation_db:.6g},{pt.distance_km:.6g},{pt.skr_bps:.6g},"
                f"{pt.qber_z:.6g},{pt.qber_x:.6g},{pt.ell},{pt.mu_opt:.6g}"
            )
        except Exception as exc:  # record the failure in-row, keep sweeping
            rows.append(f"{att:.6g},{att / cfg.channel.fiber_loss_db_per_km:.6g},nan,nan,nan,nan,nan")
            comments.append(f"# point {att:.6g} dB failed: {exc}")
    text = "\n".join([SWEEP_SCHEMA] + rows + comments) + "\n"
    path = out / args.csv
    path.write_text(text)
    print(text, end="")
    print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_finite_key(args) -> int:
    path = Path(args.input)
    if not path.exists():
        print(f"error: finite-key record not found: {path}", file=sys.stderr)
        return 2
    inp = finitekey.FiniteKeyInput.load(path)
    try:
        res = finitekey.evaluate(inp)
    except finitekey.EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"s_z1_lb = {res.s_z1_lb}")
    print(f"s_x1_lb = {res.s_x1_lb}")
    for a, q in res.q_x1_lb.items():
        print(f"q_x1_lb[{a}] = {q}")
    print(f"p_x_err_ub = {res.p_x_err_ub:.8g}")
    print(f"delta_z_ph_ub = {res.delta_z_ph_ub:.8g}")
    print(f"ell = {res.ell}")
    return 0


def cmd_attack(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    if cfg.scenario == "siphoning":
        res = run_siphoning_attack(cfg.siphoning, cfg.protocol(), cfg.seed)
        tallies = res.tallies
        extra = {"conclusive_fraction": attack_detection_rate(tallies)}
    elif cfg.scenario == "blinding":
        detectors = tuple(d.blinded() for d in cfg.detectors())
        tallies = run_blinding_attack(cfg.blinding, cfg.protocol(), detectors, cfg.seed)
        extra = {}
    else:
        result = run_session(cfg.protocol(), cfg.source, cfg.channel, cfg.detectors(), cfg.seed)
        tallies = result.tallies
        extra = {}

    report = countermeasure_statistics(tallies)
    report.save(out / "attack_report.txt")
    print(f"{'scenario':<22} {cfg.scenario}")
    for k, v in extra.items():
        print(f"{k:<22} {v:.6g}")
    print(f"{'double_click_rate':<22} {report.double_click_rate:.6g}")
    print(f"{'chi2_p_value':<22} {report.p_value:.6g}")
    print(f"{'impossible_outcomes':<22} {report.impossible_count}")
    print(f"{'verdict':<22} {report.verdict}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
