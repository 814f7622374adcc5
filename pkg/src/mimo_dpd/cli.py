"""Command line entry point.

Verbs:
  run         evaluate the chain without DPD and with the per-branch GMP DPD
  train       fit one DPD scheme and dump its loss trace and checkpoint
  compare     run + gradient-train every frequency-domain scheme
  complexity  tabulate the per-sample FLOP cost models

Every verb takes --preset/--config/--seed/--out; outputs are CSV files with
a trailing metadata comment block plus PNG renderings of the same data.  The
CSVs are byte-stable: the same config and seed give identical files.
"""

import argparse
import copy
import hashlib
import json
import os
import sys

import numpy as np
import yaml

from . import __version__
from .signals import OfdmConfig
from .channel import ChannelScenario, PathlossParams
from .pa import GmpStructure
from . import dpd as dpd_mod
from .dpd import (TdGmpDpd, FdGmpDpd, FdNnDpd, FdCnnDpd, TrainConfig,
                  train_fd_dpd, ila_train_bank, save_dpd)
from . import metrics as met
from . import complexity as cx
from .presets import DEFAULT_CONFIG, preset_config, deep_merge
from .simulate import build_chain, evaluate, make_probe

# deterministic sub-seed offsets derived from the one scenario seed
_SEED_PA = 0
_SEED_CHANNEL = 101
_SEED_EVAL = 202
_SEED_TRAIN = 303
_SEED_PROBE = 404


def load_config(path=None, preset=None, seed=None):
    """Defaults -> preset -> YAML file -> explicit seed, with unknown-key
    errors at every level."""
    cfg = preset_config(preset) if preset else copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            overlay = yaml.safe_load(fh) or {}
        if not isinstance(overlay, dict):
            raise TypeError(f"{path}: top level must be a mapping")
        file_preset = overlay.pop("preset", None)
        if file_preset and not preset:
            cfg = preset_config(file_preset)
        deep_merge(cfg, overlay, path=os.path.basename(path))
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def scenario_from_config(cfg):
    sc = cfg["scenario"]
    u = sc["n_users"]
    angles = sc["angles_deg"]
    if angles is None:
        if sc["kind"] == "los":
            raise ValueError("scenario.angles_deg is required for kind: los")
        angles = [0.0] * u
    if len(angles) != u:
        raise ValueError(f"need {u} UE angles, got {len(angles)}")
    positions = tuple((float(sc["distance_m"]), float(np.radians(a)))
                      for a in angles)
    return ChannelScenario(
        kind=sc["kind"],
        n_antennas=int(sc["n_antennas"]),
        n_users=u,
        ue_positions=positions,
        pathloss=PathlossParams(**sc["pathloss"]),
        n_taps=int(sc["n_taps"]),
        carrier_hz=float(sc["carrier_hz"]),
        noise_power_dbm=float(sc["noise_power_dbm"]),
    )


def ofdm_from_config(cfg):
    o = cfg["ofdm"]
    return OfdmConfig(int(o["n_total"]), int(o["n_data"]),
                      float(o["subcarrier_spacing_hz"]), int(o["qam_order"]))


def chain_from_config(cfg):
    ch = cfg["chain"]
    return build_chain(
        ofdm_from_config(cfg), scenario_from_config(cfg),
        pa_seed=cfg["seed"] + _SEED_PA,
        channel_seed=cfg["seed"] + _SEED_CHANNEL,
        backoff_db=float(ch["backoff_db"]),
        precoder_kind=ch["precoder"],
        crosstalk_in_db=ch["crosstalk_in_db"],
        crosstalk_out_db=ch["crosstalk_out_db"],
        user_weights=ch["user_weights"],
    )


def make_fd_dpd(scheme, cfg, ofdm, n_users, rng):
    d = cfg["dpd"][scheme]
    if scheme == "fd_gmp":
        st = GmpStructure(d["order"], d["memory"], d["cross_terms"])
        return FdGmpDpd(n_users, st)
    if scheme == "fd_nn":
        return FdNnDpd(n_users, d["memory"], d["width"], d["hidden_layers"],
                       rng=rng)
    if scheme == "fd_cnn":
        return FdCnnDpd(n_users, ofdm.n_data, d["kernels"], d["kernel_size"],
                        d["stride"], rng=rng)
    raise ValueError(f"unknown frequency-domain scheme {scheme!r}")


def fit_td_dpd(cfg, chain):
    d = cfg["dpd"]["td_gmp"]
    probe = make_probe(chain, d["probe_symbols"], cfg["seed"] + _SEED_PROBE)
    block = probe.transpose(1, 0, 2).reshape(chain.bank.n_branches, -1)
    st = GmpStructure(d["order"], d["memory"], d["cross_terms"])
    rng = np.random.Generator(np.random.Philox(cfg["seed"] + _SEED_PROBE + 1))
    std = chain.bank.models[0].sat_point * 0.053 / 24.02
    return ila_train_bank(chain.bank, block, st, iters=d["iterations"],
                          gain=chain.gain, meas_noise_std=std, rng=rng)


def gradient_train(cfg, chain, scheme):
    tr = cfg["train"]
    rng = np.random.Generator(np.random.Philox(cfg["seed"] + _SEED_TRAIN))
    dpd = make_fd_dpd(scheme, cfg, chain.ofdm, chain.scenario.n_users, rng)
    tcfg = TrainConfig(seed=cfg["seed"] + _SEED_TRAIN,
                       batch_symbols=int(tr["batch_symbols"]),
                       max_batches=int(tr["max_batches"]),
                       lr=float(tr["lr"]), eps_frac=float(tr["eps_frac"]),
                       with_crosstalk=chain.bank.crosstalk_in is not None
                       or chain.bank.crosstalk_out is not None)
    if chain.scenario.kind == "iso":
        setup = chain.scenario
    else:
        setup = (chain.realization, chain.precoder)
    return train_fd_dpd(dpd, chain.bank, setup, cfg["chain"]["precoder"],
                        chain.ofdm, chain.p_t, tcfg)


# ---------------------------------------------------------------------------
# CSV + figure output

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


def write_csv(path, header, rows, cfg):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        fh.write(f"# config_hash: {config_hash(cfg)}\n")
        fh.write(f"# seed: {cfg['seed']}\n")
        fh.write(f"# version: {__version__}\n")


def write_metrics_csv(path, records, cfg):
    n_ue = max(len(r.evm_pct) for r in records)
    header = (["scheme"] + [f"evm_pct_ue{u}" for u in range(n_ue)]
              + ["aclr_dbc", "trp_aclr_dbc", "sll_db"])
    rows = []
    for r in records:
        evms = list(r.evm_pct) + [None] * (n_ue - len(r.evm_pct))
        rows.append([r.scheme] + evms + [r.aclr_dbc, r.trp_aclr_dbc, r.sll_db])
    write_csv(path, header, rows, cfg)


def write_psd_csv(path, ofdm, curves, cfg):
    """curves: {name: per-bin power in natural FFT order}."""
    n = ofdm.n_total
    freqs = (np.arange(n) - n // 2) * ofdm.subcarrier_spacing_hz
    header = ["freq_hz"] + [f"{name}_dbm" for name in curves]
    cols = [np.fft.fftshift(p) for p in curves.values()]
    rows = []
    for i in range(n):
        rows.append([freqs[i]] + [10.0 * np.log10(max(c[i], 1e-300))
                                  for c in cols])
    write_csv(path, header, rows, cfg)


def write_beampattern_csv(path, angles, inband, oob, cfg):
    header = ["theta_deg", "inband_dbm", "oob_dbm"]
    rows = [[angles[i],
             10.0 * np.log10(max(inband[i], 1e-300)),
             10.0 * np.log10(max(oob[i], 1e-300))]
            for i in range(len(angles))]
    write_csv(path, header, rows, cfg)


def write_loss_csv(path, losses, cfg):
    write_csv(path, ["batch", "mse"],
              [[i, v] for i, v in enumerate(losses)], cfg)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_psd(path, ofdm, curves):
    plt = _pyplot()
    n = ofdm.n_total
    freqs = (np.arange(n) - n // 2) * ofdm.subcarrier_spacing_hz / 1e6
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, p in curves.items():
        ax.plot(freqs, 10 * np.log10(np.maximum(np.fft.fftshift(p), 1e-300)),
                label=name, linewidth=1.0)
    ax.set_xlabel("frequency offset [MHz]")
    ax.set_ylabel("per-bin power [dBm]")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_beampattern(path, angles, curves):
    """curves: {name: (inband, oob)} linear powers per angle."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, (inband, oob) in curves.items():
        ax.plot(angles, 10 * np.log10(np.maximum(inband, 1e-300)),
                label=f"{name} in-band", linewidth=1.0)
        ax.plot(angles, 10 * np.log10(np.maximum(oob, 1e-300)),
                label=f"{name} OOB", linewidth=1.0, linestyle="--")
    ax.set_xlabel("angle [deg]")
    ax.set_ylabel("radiated power [dBm]")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss(path, traces):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, losses in traces.items():
        ax.semilogy(np.arange(len(losses)), losses, label=name, linewidth=1.0)
    ax.set_xlabel("mini-batch")
    ax.set_ylabel("MSE loss")
    ax.legend()
    ax.grid(True, alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_flops(path, points):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    by_scheme = {}
    for p in points:
        by_scheme.setdefault(p.scheme, []).append((p.n_branches, p.flops))
    for scheme, pts in by_scheme.items():
        pts.sort()
        ax.loglog([b for b, _ in pts], [f for _, f in pts],
                  marker="o", markersize=3, label=scheme, linewidth=1.0)
    ax.set_xlabel("array size B")
    ax.set_ylabel("FLOPs per data sample")
    ax.legend()
    ax.grid(True, alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# verbs

def cmd_run(cfg, out):
    chain = chain_from_config(cfg)
    ev = cfg["eval"]
    kwargs = dict(n_symbols=int(ev["n_symbols"]),
                  seed=cfg["seed"] + _SEED_EVAL,
                  with_noise=cfg["chain"]["noise"],
                  per_subcarrier_evm=ev["per_subcarrier_evm"])
    results = [evaluate(chain, None, scheme_name="no_dpd", **kwargs)]
    td = fit_td_dpd(cfg, chain)
    results.append(evaluate(chain, td, scheme_name="td_gmp", **kwargs))

    write_metrics_csv(os.path.join(out, "metrics.csv"),
                      [r.record for r in results], cfg)
    curves = {r.record.scheme: r.bin_power for r in results}
    write_psd_csv(os.path.join(out, "psd.csv"), chain.ofdm, curves, cfg)
    base = results[0]
    inband, oob = met.beam_band_powers(base.pattern, chain.plan)
    write_beampattern_csv(os.path.join(out, "beampattern.csv"),
                          base.angles_deg, inband, oob, cfg)
    render_psd(os.path.join(out, "psd.png"), chain.ofdm, curves)
    beam_curves = {}
    for r in results:
        beam_curves[r.record.scheme] = met.beam_band_powers(r.pattern, chain.plan)
    render_beampattern(os.path.join(out, "beampattern.png"),
                       base.angles_deg, beam_curves)
    return results


def cmd_train(cfg, out):
    chain = chain_from_config(cfg)
    scheme = cfg["train"]["scheme"]
    if scheme == "td_gmp":
        td = fit_td_dpd(cfg, chain)
        # per-branch ILA has no gradient trace; store per-iteration cascade
        # NMSE of branch 0 as the loss record
        probe = make_probe(chain, cfg["dpd"]["td_gmp"]["probe_symbols"],
                           cfg["seed"] + _SEED_PROBE)
        res = dpd_mod.ila_train(chain.bank.models[0], probe[:, 0, :].ravel(),
                                td.models[0].structure, gain=chain.gain)
        losses = [10.0 ** (v / 10.0) for v in res.nmse_trace_db]
        dpd = td
    else:
        result = gradient_train(cfg, chain, scheme)
        losses = result.losses
        dpd = result.dpd
        print(f"{scheme}: {result.n_batches} batches, stop={result.stop_reason}, "
              f"final loss {losses[-1]:.4g}")
    write_loss_csv(os.path.join(out, "loss.csv"), losses, cfg)
    save_dpd(os.path.join(out, f"dpd_{scheme}.npz"), dpd)
    render_loss(os.path.join(out, "loss.png"), {scheme: losses})
    return losses


def cmd_compare(cfg, out):
    chain = chain_from_config(cfg)
    ev = cfg["eval"]
    kwargs = dict(n_symbols=int(ev["n_symbols"]),
                  seed=cfg["seed"] + _SEED_EVAL,
                  with_noise=cfg["chain"]["noise"],
                  per_subcarrier_evm=ev["per_subcarrier_evm"])
    results = [evaluate(chain, None, scheme_name="no_dpd", **kwargs)]
    results.append(evaluate(chain, fit_td_dpd(cfg, chain),
                            scheme_name="td_gmp", **kwargs))
    traces = {}
    for scheme in ("fd_gmp", "fd_nn", "fd_cnn"):
        res = gradient_train(cfg, chain, scheme)
        traces[scheme] = res.losses
        write_loss_csv(os.path.join(out, f"loss_{scheme}.csv"), res.losses, cfg)
        results.append(evaluate(chain, res.dpd, scheme_name=scheme, **kwargs))

    write_metrics_csv(os.path.join(out, "metrics.csv"),
                      [r.record for r in results], cfg)
    curves = {r.record.scheme: r.bin_power for r in results}
    write_psd_csv(os.path.join(out, "psd.csv"), chain.ofdm, curves, cfg)
    for r in results:
        inband, oob = met.beam_band_powers(r.pattern, chain.plan)
        write_beampattern_csv(
            os.path.join(out, f"beampattern_{r.record.scheme}.csv"),
            r.angles_deg, inband, oob, cfg)
    render_psd(os.path.join(out, "psd.png"), chain.ofdm, curves)
    render_loss(os.path.join(out, "loss.png"), traces)
    beam_curves = {r.record.scheme: met.beam_band_powers(r.pattern, chain.plan)
                   for r in results}
    render_beampattern(os.path.join(out, "beampattern.png"),
                       results[0].angles_deg, beam_curves)
    return results


def cmd_complexity(cfg, out):
    d = cfg["dpd"]
    cost = cx.CostConfig(
        n_total=int(cfg["ofdm"]["n_total"]),
        n_data=int(cfg["ofdm"]["n_data"]),
        n_users=int(cfg["scenario"]["n_users"]),
        td_order=d["td_gmp"]["order"], td_memory=d["td_gmp"]["memory"],
        td_cross=d["td_gmp"]["cross_terms"],
        fd_order=d["fd_gmp"]["order"], fd_memory=d["fd_gmp"]["memory"],
        fd_cross=d["fd_gmp"]["cross_terms"],
        nn_width=d["fd_nn"]["width"], nn_hidden=d["fd_nn"]["hidden_layers"],
        cnn_kernels=d["fd_cnn"]["kernels"],
        cnn_kernel_size=d["fd_cnn"]["kernel_size"],
        cnn_stride=d["fd_cnn"]["stride"],
        n_aux=int(cfg["complexity"]["n_aux"]),
    )
    branches = [int(b) for b in cfg["complexity"]["branch_counts"]]
    points = cx.sweep(cost, branches)
    write_csv(os.path.join(out, "flops.csv"),
              ["scheme", "n_branches", "n_users", "flops"],
              [[p.scheme, p.n_branches, p.n_users, p.flops] for p in points],
              cfg)
    cross = cx.branch_crossovers(cost)
    write_csv(os.path.join(out, "crossover.csv"),
              ["scheme", "first_branch_count_cheaper_than_td"],
              [[s, b] for s, b in cross.items()], cfg)
    rows = cx.published_discrepancies(cost)
    write_csv(os.path.join(out, "reference_points.csv"),
              ["series", "n_branches", "published", "computed", "ratio"],
              [[r["series"], r["n_branches"], r["published"], r["computed"],
                r["ratio"]] for r in rows], cfg)
    render_flops(os.path.join(out, "flops.png"), points)
    return points


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mimo-dpd",
        description="Linearization testbench for multi-antenna OFDM downlinks")
    parser.add_argument("verb", choices=["run", "train", "compare", "complexity"])
    parser.add_argument("--config", help="YAML config overlay")
    parser.add_argument("--preset", help="named setup (desk8/desk16/desk32/beam16)")
    parser.add_argument("--seed", type=int, help="scenario seed override")
    parser.add_argument("--out", default="out", help="output directory")
    args = parser.parse_args(argv)

    cfg = load_config(args.config, args.preset, args.seed)
    os.makedirs(args.out, exist_ok=True)

    if args.verb == "run":
        results = cmd_run(cfg, args.out)
    elif args.verb == "train":
        cmd_train(cfg, args.out)
        results = []
    elif args.verb == "compare":
        results = cmd_compare(cfg, args.out)
    else:
        cmd_complexity(cfg, args.out)
        results = []

    for r in results:
        rec = r.record
        evm_s = "/".join(f"{v:.2f}" for v in rec.evm_pct)
        print(f"{rec.scheme:8s} evm% {evm_s}  aclr {rec.aclr_dbc:.1f} dB  "
              f"trp-aclr {rec.trp_aclr_dbc:.1f} dB  sll {rec.sll_db:.1f} dB")
    print(f"outputs in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
