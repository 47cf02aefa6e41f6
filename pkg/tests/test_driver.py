import json
import os
import signal
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from mcmp2 import driver
from mcmp2.driver import (CheckpointError, ConfigError, RunConfig, WorkerResult, config_hash,
                          fnv1a64, merge, parse_config, parse_config_text)
from mcmp2.fixtures import read_sidecar, write_fixture


@pytest.fixture(scope="module")
def h2_file(tmp_path_factory):
    path, _ = write_fixture("h2_sto3g", tmp_path_factory.mktemp("fx"))
    return str(path)


def _rec(n, mean, sb=0.1, h="abc", k=0):
    return WorkerResult(k, n, mean, sb, n // 100, 0.5, 1.0, 0.0, h)


def test_fnv1a64_reference_values():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_defaults(h2_file):
    cfg = parse_config(spinors=h2_file, steps=100)
    assert (cfg.walkers, cfg.blocksize, cfg.burnin, cfg.workers) == (8, 100, 1000, 1)


def test_config_file(tmp_path, h2_file):
    p = tmp_path / "run.cfg"
    p.write_text(f"spinors {h2_file}\nsteps 500  # budget\nwalkers 4\nweight H 0.3 0.1 0.2 0.5\n")
    cfg = parse_config(p)
    assert cfg.steps == 500 and cfg.walkers == 4
    assert cfg.weights == {"H": ((0.3, 0.1), (0.2, 0.5))}
    assert parse_config_text(driver.config_text(cfg)) == cfg


def test_config_errors(h2_file):
    with pytest.raises(ConfigError, match="walkers"):
        parse_config_text(f"spinors {h2_file}\nsteps 10\nwalkers 1\n")
    with pytest.raises(ConfigError, match="'walker'"):
        parse_config_text(f"spinors {h2_file}\nsteps 10\nwalker 4\n")
    with pytest.raises(ConfigError, match="exactly one stopping rule"):
        parse_config_text(f"spinors {h2_file}\nsteps 10\ntarget-rel-err 0.1\n")
    with pytest.raises(ConfigError, match="exactly one stopping rule"):
        parse_config_text(f"spinors {h2_file}\n")
    with pytest.raises(ConfigError, match="set twice"):
        parse_config_text(f"spinors {h2_file}\nsteps 10\nsteps 20\n")
    with pytest.raises(ConfigError):
        parse_config_text(f"spinors {h2_file}\nsteps ten\n")
    with pytest.raises(ConfigError):
        RunConfig(h2_file, steps=10, blocksize=0)
    with pytest.raises(ConfigError):
        RunConfig(h2_file, steps=10, workers=0)


def test_budget_split(h2_file):
    cfg = RunConfig(h2_file, steps=10, workers=3)
    assert [cfg.worker_budget(k) for k in range(3)] == [4, 3, 3]


def test_hash_covers_physics_only(h2_file):
    base = RunConfig(h2_file, steps=10)
    h = config_hash(base)
    assert len(h) == 16
    assert config_hash(replace(base, seed=5, workers=3, steps=99)) == h
    assert config_hash(replace(base, walkers=4)) != h
    assert config_hash(replace(base, weights={"H": ((0.3, 0.1), (0.2, 0.5))})) != h


def test_merge_examples():
    assert merge([_rec(100, 1.0, 0.3)]) == (1.0, 0.3)
    assert merge([_rec(200, 1.0), _rec(200, 3.0)])[0] == 2.0
    mean, sb = merge([_rec(100, 1.0, 0.4), _rec(300, 2.0, 0.2)])
    assert mean == 1.75
    assert sb == pytest.approx(np.sqrt((0.25 * 0.4) ** 2 + (0.75 * 0.2) ** 2), rel=1e-15)
    with pytest.raises(ValueError):
        merge([])
    with pytest.raises(CheckpointError):
        merge([_rec(100, 1.0), _rec(100, 1.0, h="other")])


def test_single_worker_is_deterministic(tmp_path, h2_file):
    cfg = RunConfig(h2_file, steps=10 ** 4, walkers=4, seed=3, burnin=200)
    a = driver.run(cfg)
    b = driver.run(cfg)
    assert a.to_dict() == b.to_dict()
    assert a.n_total == 10 ** 4
    assert a.workers[0].n_blocks == 100


def test_worker_bookkeeping(h2_file):
    report = driver.run(RunConfig(h2_file, steps=3 * 4000, walkers=4, workers=3, burnin=100))
    assert report.n_total == 12000
    assert [w.n for w in report.workers] == [4000, 4000, 4000]
    means = {w.mean for w in report.workers}
    assert len(means) == 3


def test_trace_format(tmp_path, h2_file):
    trace = tmp_path / "t.txt"
    report = driver.run(RunConfig(h2_file, steps=2000, walkers=4, burnin=100, blocksize=50,
                                  trace=str(trace)))
    lines = trace.read_text().splitlines()
    assert len(lines) == 40
    n, i, s = lines[-1].split()
    assert int(n) == 2000
    assert float(i) == report.energy and float(s) == report.sigma_bar
    for field in (i, s):
        digits = field.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
        assert len(digits) <= 17 and float(f"{float(field):.17g}") == float(field)


def _uninterrupted_and_resumed(tmp_path, h2_file, workers, kill_after):
    full_trace = tmp_path / "full.trace"
    cfg = RunConfig(h2_file, steps=6000, walkers=4, burnin=100, workers=workers,
                    checkpoint=str(tmp_path / "full.ckpt"), checkpoint_interval=1000,
                    trace=str(full_trace))
    ref = driver.run(cfg)
    cut = replace(cfg, checkpoint=str(tmp_path / "cut.ckpt"), trace=str(tmp_path / "cut.trace"))
    assert driver.run(cut, max_checkpoints=kill_after) is None
    resumed = driver.resume(cut.checkpoint)
    assert resumed.to_dict() == ref.to_dict()
    assert Path(cut.trace).read_text() == full_trace.read_text()


@pytest.mark.parametrize("workers,kill_after", [(1, 1), (1, 4), (2, 3)])
def test_kill_and_resume_bit_exact(tmp_path, h2_file, workers, kill_after):
    _uninterrupted_and_resumed(tmp_path, h2_file, workers, kill_after)


def test_resume_rejects_changed_inputs(tmp_path, h2_file):
    spin = tmp_path / "h2.spinor"
    spin.write_text(Path(h2_file).read_text())
    ckpt = tmp_path / "c.ckpt"
    cfg = RunConfig(str(spin), steps=4000, walkers=4, burnin=100, checkpoint=str(ckpt),
                    checkpoint_interval=1000)
    assert driver.run(cfg, max_checkpoints=1) is None
    spin.write_text(spin.read_text() + "\n")
    with pytest.raises(CheckpointError, match="hash mismatch"):
        driver.resume(ckpt)
    bad = tmp_path / "bad.ckpt"
    bad.write_text(json.dumps({"format": "mcmp2-checkpoint", "version": 99}))
    with pytest.raises(CheckpointError, match="version"):
        driver.resume(bad)


def test_merge_files_of_independent_runs(tmp_path, h2_file):
    paths = []
    for seed in (1, 2):
        p = tmp_path / f"s{seed}.ckpt"
        driver.run(RunConfig(h2_file, steps=2000, walkers=4, burnin=100, seed=seed,
                             checkpoint=str(p)))
        paths.append(p)
    rep = driver.merge_files(paths)
    assert rep.n_total == 4000
    singles = [driver.merge_files([p]) for p in paths]
    assert rep.energy == pytest.approx((singles[0].energy + singles[1].energy) / 2, rel=1e-14)
    other = tmp_path / "m3.ckpt"
    driver.run(RunConfig(h2_file, steps=2000, walkers=3, burnin=100, checkpoint=str(other)))
    with pytest.raises(CheckpointError):
        driver.merge_files([paths[0], other])


def test_target_mode_stops(h2_file):
    rep = driver.run(RunConfig(h2_file, target_rel_err=2.0, walkers=8, burnin=200,
                               checkpoint_interval=1000))
    assert rep.relative_error <= 2.0
    assert rep.workers[0].n_blocks >= driver.MIN_BLOCKS_FOR_TARGET
    assert rep.n_total % 1000 == 0


def test_h2_run_agrees_with_oracle(h2_file):
    e2 = read_sidecar(h2_file)
    rep = driver.run(RunConfig(h2_file, steps=10 ** 5, walkers=8, seed=0))
    assert abs(rep.energy - e2) <= 3 * rep.sigma_bar


def test_subprocess_kill_and_resume(tmp_path, h2_file):
    """A real SIGKILL between checkpoints followed by ``mcmp2 resume``."""
    args = ["--spinors", h2_file, "--steps", "300000", "--walkers", "4", "--burnin", "100",
            "--checkpoint-interval", "2000", "--json"]
    ref = subprocess.run([sys.executable, "-m", "mcmp2.cli", "run", *args,
                          "--checkpoint", str(tmp_path / "ref.ckpt")],
                         capture_output=True, text=True, check=True)
    ckpt = tmp_path / "cut.ckpt"
    proc = subprocess.Popen([sys.executable, "-m", "mcmp2.cli", "run", *args,
                             "--checkpoint", str(ckpt)], stdout=subprocess.DEVNULL)
    t0 = time.time()
    while not ckpt.exists() and time.time() - t0 < 60:
        time.sleep(0.05)
    time.sleep(0.3)
    os.kill(proc.pid, signal.SIGKILL)
    proc.wait()
    doc = driver.read_checkpoint(ckpt)
    assert not doc["workers"][0]["done"]
    out = subprocess.run([sys.executable, "-m", "mcmp2.cli", "resume", "--checkpoint", str(ckpt),
                          "--json"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout) == json.loads(ref.stdout)
