import json

import numpy as np
import pytest

from lvggm.cli import main
from lvggm.datagen import gen_model
from lvggm.matio import read_matrix, write_matrix_binary


def run_cli(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestGen:
    def test_writes_manifest_and_matrices(self, tmp_path, capsys):
        out = tmp_path / "inst"
        code, _, _ = run_cli(
            capsys, "gen", "--p", "20", "--r", "2", "--n", "400",
            "--seed", "7", "--out", str(out),
        )
        assert code == 0
        assert len(list(out.iterdir())) == 5
        for name in ("S.mat", "Ltrue.mat", "C.mat", "Sigmatrue.mat", "model.json"):
            assert (out / name).exists()
        meta = json.loads((out / "model.json").read_text())
        assert meta["p"] == 20 and meta["r"] == 2 and meta["n"] == 400
        assert meta["seed"] == 7
        S = read_matrix(out / "S.mat")
        assert S.shape == (20, 20)

    def test_auto_rank_default(self, tmp_path, capsys):
        out = tmp_path / "inst"
        run_cli(capsys, "gen", "--p", "100", "--n", "500", "--out", str(out))
        meta = json.loads((out / "model.json").read_text())
        assert meta["r"] == 5

    def test_same_seed_byte_identical(self, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            run_cli(capsys, "gen", "--p", "15", "--r", "2", "--n", "300",
                    "--seed", "3", "--out", str(out))
        for name in ("S.mat", "Ltrue.mat", "C.mat", "Sigmatrue.mat"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_true_nll_consistent_with_eval(self, tmp_path, capsys):
        out = tmp_path / "inst"
        run_cli(capsys, "gen", "--p", "18", "--r", "2", "--n", "360",
                "--seed", "5", "--out", str(out))
        meta = json.loads((out / "model.json").read_text())
        code, stdout, _ = run_cli(
            capsys, "eval", "--estimate", str(out / "Ltrue.mat"),
            "--s", str(out / "S.mat"), "--cov", str(out / "C.mat"),
        )
        report = json.loads(stdout)
        assert abs(report["nll"] - meta["true_nll"]) < 1e-10


class TestFit:
    def _population_instance(self, tmp_path, p=20, r=2, seed=11):
        model = gen_model(p, r, seed=seed)
        write_matrix_binary(tmp_path / "S.mat", model.S_star)
        write_matrix_binary(tmp_path / "C.mat", model.sigma_star)
        write_matrix_binary(tmp_path / "Ltrue.mat", model.L_star)
        return model

    @pytest.mark.parametrize("algo", ["ep", "ap-bk", "ap-lanczos"])
    def test_noiseless_fit_recovers(self, tmp_path, capsys, algo):
        self._population_instance(tmp_path)
        out = tmp_path / "fit"
        code, _, _ = run_cli(
            capsys, "fit", "--s", str(tmp_path / "S.mat"),
            "--cov", str(tmp_path / "C.mat"), "--algo", algo, "--rank", "2",
            "--truth", str(tmp_path / "Ltrue.mat"), "--out", str(out),
            "--max-iters", "300", "--nll-tol", "0",
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        threshold = 1e-4 if algo == "ep" else 1e-3
        assert summary["rel_error"] < threshold
        assert summary["output_rank"] == 2
        assert (out / "Lhat.mat").exists()
        trace_lines = (out / "trace.csv").read_text().strip().split("\n")
        assert trace_lines[0] == "iter,nll,seconds,eta,halvings,rank,rel_error"
        assert summary["iterations"] == len(trace_lines) - 1

    def test_admm_fit_writes_both_estimates(self, tmp_path, capsys):
        model = self._population_instance(tmp_path, p=25, r=2, seed=13)
        out = tmp_path / "fit"
        code, _, _ = run_cli(
            capsys, "fit", "--cov", str(tmp_path / "C.mat"), "--algo", "admm",
            "--l1", "0.05", "--nuclear", "0.1", "--out", str(out),
            "--n-samples", "10000",
        )
        assert code == 0
        assert (out / "Lhat.mat").exists()
        assert (out / "Shat.mat").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert "admm_objective" in summary

    def test_eval_matches_solver_internal_rel_error(self, tmp_path, capsys):
        # sampled covariance: the statistical-error regime the cross-check
        # targets (near-zero errors lose digits to cancellation instead)
        from lvggm.datagen import sample_covariance

        model = gen_model(18, 2, seed=21)
        write_matrix_binary(tmp_path / "S.mat", model.S_star)
        write_matrix_binary(tmp_path / "C.mat", sample_covariance(model, 500, seed=3))
        write_matrix_binary(tmp_path / "Ltrue.mat", model.L_star)
        out = tmp_path / "fit"
        run_cli(
            capsys, "fit", "--s", str(tmp_path / "S.mat"),
            "--cov", str(tmp_path / "C.mat"), "--algo", "ep", "--rank", "2",
            "--truth", str(tmp_path / "Ltrue.mat"), "--out", str(out),
            "--max-iters", "60",
        )
        summary = json.loads((out / "summary.json").read_text())
        _, stdout, _ = run_cli(
            capsys, "eval", "--estimate", str(out / "Lhat.mat"),
            "--reference", str(tmp_path / "Ltrue.mat"),
        )
        report = json.loads(stdout)
        assert abs(report["rel_error"] - summary["rel_error"]) < 1e-12

    def test_non_pd_sparse_part_fails_before_iterating(self, tmp_path, capsys):
        write_matrix_binary(tmp_path / "S.mat", -np.eye(5))
        write_matrix_binary(tmp_path / "C.mat", np.eye(5))
        code, _, err = run_cli(
            capsys, "fit", "--s", str(tmp_path / "S.mat"),
            "--cov", str(tmp_path / "C.mat"), "--algo", "ep", "--rank", "1",
            "--out", str(tmp_path / "fit"),
        )
        assert code == 1
        payload = json.loads(err.strip())
        assert payload["error"] == "NotPositiveDefiniteError"

    def test_missing_rank_is_usage_error(self, tmp_path, capsys):
        write_matrix_binary(tmp_path / "S.mat", np.eye(5))
        write_matrix_binary(tmp_path / "C.mat", np.eye(5))
        code, _, err = run_cli(
            capsys, "fit", "--s", str(tmp_path / "S.mat"),
            "--cov", str(tmp_path / "C.mat"), "--algo", "ep",
            "--out", str(tmp_path / "fit"),
        )
        assert code == 1
        assert json.loads(err.strip())["error"] == "ValueError"


class TestEval:
    def test_exact_match_is_zero(self, tmp_path, capsys, rng):
        A = rng.standard_normal((6, 6))
        A = (A + A.T) / 2
        write_matrix_binary(tmp_path / "a.mat", A)
        code, stdout, _ = run_cli(
            capsys, "eval", "--estimate", str(tmp_path / "a.mat"),
            "--reference", str(tmp_path / "a.mat"),
        )
        report = json.loads(stdout)
        assert report["rel_error"] == 0.0

    def test_zero_estimate_normalization(self, tmp_path, capsys, rng):
        A = rng.standard_normal((5, 5))
        A = (A + A.T) / 2
        write_matrix_binary(tmp_path / "ref.mat", A)
        write_matrix_binary(tmp_path / "zero.mat", np.zeros((5, 5)))
        _, stdout, _ = run_cli(
            capsys, "eval", "--estimate", str(tmp_path / "zero.mat"),
            "--reference", str(tmp_path / "ref.mat"),
        )
        assert json.loads(stdout)["rel_error"] == pytest.approx(1.0)

    def test_dim_mismatch_is_error(self, tmp_path, capsys):
        write_matrix_binary(tmp_path / "a.mat", np.eye(3))
        write_matrix_binary(tmp_path / "b.mat", np.eye(4))
        code, _, err = run_cli(
            capsys, "eval", "--estimate", str(tmp_path / "a.mat"),
            "--reference", str(tmp_path / "b.mat"),
        )
        assert code == 1
        assert json.loads(err.strip())["error"] == "ValueError"


class TestBench:
    def _spec(self, tmp_path, **overrides):
        payload = {
            "dims": [16],
            "oversampling": [10, 25],
            "trials": 2,
            "algorithms": ["ep"],
            "master_seed": 4,
            "max_iters": 120,
        }
        payload.update(overrides)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(payload))
        return path

    def test_row_count_and_monotone_medians(self, tmp_path, capsys):
        spec = self._spec(tmp_path)
        out = tmp_path / "bench"
        code, _, _ = run_cli(capsys, "bench", "--spec", str(spec), "--out", str(out))
        assert code == 0
        rows = (out / "results.csv").read_text().strip().split("\n")
        assert len(rows) == 1 + 2 * 2  # header + ratios x trials
        med_rows = (out / "medians.csv").read_text().strip().split("\n")
        assert len(med_rows) == 1 + 2
        # median error decreases as oversampling grows
        meds = [float(line.split(",")[4]) for line in med_rows[1:]]
        assert meds[0] > meds[1]

    def test_rerun_identical_modulo_timing(self, tmp_path, capsys):
        spec = self._spec(tmp_path)
        outs = []
        for name in ("b1", "b2"):
            out = tmp_path / name
            run_cli(capsys, "bench", "--spec", str(spec), "--out", str(out))
            outs.append((out / "results.csv").read_text().strip().split("\n"))
        header = outs[0][0].split(",")
        drop = {header.index("seconds"), header.index("mean_iter_seconds")}
        for r1, r2 in zip(*outs):
            kept1 = [c for i, c in enumerate(r1.split(",")) if i not in drop]
            kept2 = [c for i, c in enumerate(r2.split(",")) if i not in drop]
            assert kept1 == kept2

    def test_empty_algorithms_rejected(self, tmp_path, capsys):
        spec = self._spec(tmp_path, algorithms=[])
        code, _, err = run_cli(
            capsys, "bench", "--spec", str(spec), "--out", str(tmp_path / "x")
        )
        assert code == 1
        assert json.loads(err.strip())["error"] == "ValueError"


class TestUsageErrors:
    def test_unknown_subcommand_emits_json(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["frobnicate"])
        assert exc_info.value.code == 2
        err = capsys.readouterr().err
        assert json.loads(err.strip())["error"] == "UsageError"
