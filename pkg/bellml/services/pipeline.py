"""
CLI コマンドに対応するサービス層。
各 run_* は例外を送出せず、終了コードを status に持つコンテキスト dict を返す。
"""
from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from ..errors import BellMLError, DataError, DomainError, SearchFailed, SearchRefuted, UsageError
from ..repositories import dataset_repo, model_repo, report_repo
from ..settings import resolve_workers
from . import analytic_classifier, dataset as ds, learner, lp_engine, sampler, scenario
from .dataset import Dataset, SplitSpec
from .mlp import MLPConfig, MLPModel

logger = logging.getLogger(__name__)

GRID_DIR = "grid"
GRID_MANIFEST = "grid.yaml"
ENSEMBLE_DIR = "ensemble"
SEARCH_PENALTY = 10.0
BOUNDARY_MARGIN = 1e-3
DISCOVERY_FLOOR = 1e-3
PENALTY_SLACK = 2 * BOUNDARY_MARGIN


def _error_context(exc: Exception, mode: str) -> Dict[str, Any]:
    """
    例外をコマンドの結果コンテキストに変換する。
    bellml の例外は自身の終了コードを、OSError はデータ系 (3) を、それ以外は 1 を使う。
    """
    if isinstance(exc, BellMLError):
        status = exc.exit_code
    elif isinstance(exc, OSError):
        status = DataError.exit_code
    else:
        status = 1
    context = {
        "ok": False,
        "status": status,
        "error": str(exc),
        "error_type": type(exc).__name__,
        "mode": mode,
    }
    diagnostics = getattr(exc, "diagnostics", None)
    if diagnostics:
        context["diagnostics"] = diagnostics
    return context


def _guarded(mode: str, work: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
    try:
        result = work()
    except Exception as exc:  # 終了コードへ変換するため全て受ける
        if isinstance(exc, BellMLError):
            logger.error("%s failed: %s", mode, exc)
        else:
            logger.exception("%s failed", mode)
        return _error_context(exc, mode=mode)
    return {"ok": True, "status": 0, "mode": mode, **result}


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _workers(config: Mapping[str, Any]) -> int:
    return resolve_workers(config.get("workers"))


def _base_mlp_config(config: Mapping[str, Any], task: str, scenario_name: str) -> MLPConfig:
    return MLPConfig(
        learning_rate=config["learning_rate"],
        batch_size=config["batch_size"],
        max_epochs=config["max_epochs"],
        patience=config["patience"],
        seed=config["seed"],
        task=task,
        output_range=ds.TARGET_RANGES.get(scenario_name) if task == "regression" else None,
    )


def partitions(d: Dataset, config: Mapping[str, Any]) -> Dict[str, Dataset]:
    """
    train/test (75/25) の後、train から blend fold (20%) を取り分け、
    残りをメンバー学習用と検証用 (90/10) に分ける。同じ設定なら常に同じ分割。
    """
    seed = config["seed"]
    train, test = ds.split(d, SplitSpec(config["train_fraction"], seed))
    rest, blend = ds.split(train, SplitSpec(1.0 - config["blend_fraction"], seed + 1))
    fit, val = ds.split(rest, SplitSpec(1.0 - config["val_fraction"], seed + 2))
    return {"train": train, "test": test, "rest": rest, "blend": blend, "fit": fit, "val": val}


def _scenario_of(manifest: Mapping[str, Any]) -> Tuple[str, int]:
    cfg = manifest.get("config") or {}
    return cfg.get("scenario", "bipartite"), int(cfg.get("m", 2))


def _raw_point(scenario_name: str, t: scenario.TripartiteCorrelators) -> np.ndarray:
    return scenario.ij_point(t).vector if scenario_name == "bilocal4" else t.vector


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def run_gen(config: Mapping[str, Any], output: str, probes: Optional[Sequence[float]] = None) -> Dict[str, Any]:
    def work():
        scenario_name = config["scenario"]
        if scenario_name == "classification":
            d = ds.gen_classification(config["n"], config["seed"], config=config)
        else:
            d = ds.gen_regression(
                scenario_name,
                config["n"],
                config["seed"],
                m=config["m"],
                nu_grid=config["nu_grid"],
                max_attempts=config["max_attempts"],
                workers=_workers(config),
                config=config,
            )
        if probes:
            d = ds.add_probes(d, probes, nu_grid=config["nu_grid"])
        path = dataset_repo.save_dataset(d, output)
        return {
            "path": str(path),
            "records": len(d),
            "feature_schema": d.metadata["feature_schema"],
            "throughput": d.metadata.get("throughput"),
            "acceptance": d.metadata.get("acceptance"),
            "volume_fractions": d.metadata.get("volume_fractions"),
        }

    return _guarded("gen", work)


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def _oracle_nl(point: Sequence[float], m: Optional[int]) -> Dict[str, Any]:
    c = scenario.CorrelatorVector(m, np.asarray(point, dtype=float)) if m else scenario.CorrelatorVector.of(point)
    result = lp_engine.nl_distance(c, c.m)
    support = np.flatnonzero(result.weights > 1e-9)
    out = {"nl": result.nl, "m": c.m, "witness_support": int(support.size)}
    if c.m == 2:
        out["chsh_max"] = float(np.max(scenario.chsh_symmetries(c)))
    return out


def _oracle_nbl(point: Optional[Sequence[float]], werner: Optional[float], grid: int) -> Dict[str, Any]:
    ineq = None
    if werner is not None:
        t = sampler.quantum_swap_correlators(werner)
        target = t
        ineq = sampler.ij_violation(t)
    elif point is not None and len(point) == 10:
        target = scenario.TripartiteCorrelators.from_vector(point)
        ineq = sampler.ij_violation(target)
    elif point is not None and len(point) == 4:
        target = scenario.IJPoint(*point)
        ineq = scenario.bilocal_inequality_value(target.i, target.j)
    else:
        raise UsageError("nbl needs --werner V or a --point with 4 (I,J,A0,A1) or 10 values")
    result = lp_engine.nbl_distance(target, grid=grid)
    return {
        "nbl": result.nbl,
        "nu_argmin": result.nu_argmin,
        "nu_range": [result.nu_min, result.nu_max],
        "early_exit": result.early_exit,
        "grid": result.nu_grid_size,
        "inequality": ineq,
    }


def _oracle_class(point: Sequence[float]) -> Dict[str, Any]:
    c = scenario.CorrelatorVector.of(point)
    label = analytic_classifier.classify(c)
    return {
        "class": label.name,
        "chsh_max": float(np.max(scenario.chsh_symmetries(c))),
        "arcsin_max": float(np.max(analytic_classifier.masanes_values(c))),
    }


def run_oracle(
    kind: str,
    config: Mapping[str, Any],
    point: Optional[Sequence[float]] = None,
    m: Optional[int] = None,
    grid: Optional[int] = None,
    werner: Optional[float] = None,
) -> Dict[str, Any]:
    def work():
        started = time.perf_counter()
        if kind == "nl":
            if point is None:
                raise UsageError("nl needs --point")
            out = _oracle_nl(point, m)
        elif kind == "nbl":
            out = _oracle_nbl(point, werner, grid or config["nu_grid"])
        elif kind == "class":
            if point is None:
                raise UsageError("class needs --point")
            out = _oracle_class(point)
        else:
            raise UsageError(f"unknown oracle {kind!r}")
        out["seconds"] = time.perf_counter() - started
        out["kind"] = kind
        return out

    return _guarded("oracle", work)


# ---------------------------------------------------------------------------
# train / blend / eval
# ---------------------------------------------------------------------------

def run_train(config: Mapping[str, Any], dataset_path: str, output_dir: str) -> Dict[str, Any]:
    """36 構成のグリッドを学習し、output_dir/grid に書き出す。"""

    def work():
        d = dataset_repo.load_dataset(dataset_path)
        parts = partitions(d, config)
        fit, val = ds.poly_features(parts["fit"], config["poly_degree"]), ds.poly_features(parts["val"], config["poly_degree"])
        scenario_name = d.metadata.get("scenario", config["scenario"])
        base = _base_mlp_config(config, d.task, scenario_name)
        models, failures = learner.train_grid(fit, val, d.task, base=base, workers=_workers(config))

        grid_dir = Path(output_dir) / GRID_DIR
        member_files = []
        for i, model in enumerate(models):
            name = f"member_{i:02d}.mlp"
            model_repo.save_model(model, grid_dir / name)
            member_files.append(name)
        report_repo.write_yaml(
            {
                "dataset": str(dataset_path),
                "members": member_files,
                "failures": failures,
                "sizes": {k: len(v) for k, v in parts.items()},
                "config": dict(config),
            },
            grid_dir / GRID_MANIFEST,
        )
        return {"grid_dir": str(grid_dir), "trained": len(models), "failed": len(failures)}

    return _guarded("train", work)


def _member_ledger(model: MLPModel, metrics: learner.Metrics, kept: bool) -> Dict[str, Any]:
    return {
        "hidden_layers": model.config.hidden_layers,
        "width": model.config.width,
        "seed": model.config.seed,
        "epochs": len(model.history.get("train_loss", [])),
        "mae": metrics.mae,
        "accuracy": metrics.accuracy,
        "kept": kept,
    }


def run_blend(config: Mapping[str, Any], dataset_path: str, model_dir: str) -> Dict[str, Any]:
    """blend fold でメンバーをフィルタし、ブレンダーを学習して model_dir/ensemble に保存する。"""

    def work():
        d = dataset_repo.load_dataset(dataset_path)
        parts = partitions(d, config)
        grid_dir = Path(model_dir) / GRID_DIR
        manifest = report_repo.read_yaml(grid_dir / GRID_MANIFEST)
        members = [model_repo.load_model(grid_dir / name) for name in manifest.get("members", [])]
        if not members:
            raise DataError(f"no grid members found in {grid_dir}")

        blend_expanded = ds.poly_features(parts["blend"], config["poly_degree"])
        evaluated = [(member, learner.evaluate(member, blend_expanded)) for member in members]
        baseline = None
        if d.task == "regression":
            baseline = learner.fit_poly_baseline(
                parts["rest"], parts["blend"], degree=config["baseline_degree"], max_features=config["baseline_max_features"]
            )
        kept = learner.filter_members(
            evaluated, d.task, baseline_mae=baseline, accuracy_floor=config["accuracy_floor"], ratio=config["filter_ratio"]
        )
        kept_ids = {id(m) for m, _ in kept}
        ledger = [_member_ledger(m, s, id(m) in kept_ids) for m, s in evaluated]
        ensemble = learner.train_blender(
            [m for m, _ in kept],
            parts["blend"],
            d.task,
            trees=config["blender_trees"],
            seed=config["seed"],
            poly_degree=config["poly_degree"],
            ledger=ledger,
            baseline_mae=baseline,
        )
        out_dir = model_repo.save_ensemble(ensemble, Path(model_dir) / ENSEMBLE_DIR, config=config)
        return {"ensemble_dir": str(out_dir), "members": len(kept), "candidates": len(members), "baseline_mae": baseline}

    return _guarded("blend", work)


def _probe_report(ensemble: learner.EnsembleModel, d: Dataset) -> List[Dict[str, Any]]:
    probe_set = ds.probes(d)
    if not len(probe_set):
        return []
    predictions = learner.ensemble_predict(ensemble, probe_set.features)
    infos = d.metadata.get("probes") or []
    rows = []
    for i, (target, predicted) in enumerate(zip(probe_set.targets, predictions)):
        info = infos[i] if i < len(infos) else {}
        rows.append({
            "parameter": info.get("parameter"),
            "expected": info.get("expected"),
            "oracle": float(target),
            "predicted": float(predicted),
            "error": float(abs(predicted - target)),
        })
    return rows


def run_eval(config: Mapping[str, Any], dataset_path: str, model_dir: str, output_dir: str) -> Dict[str, Any]:
    """test 分割でアンサンブルとメンバーを評価し、表とレポートを書き出す。"""

    def work():
        d = dataset_repo.load_dataset(dataset_path)
        parts = partitions(d, config)
        ensemble, _ = model_repo.load_ensemble(Path(model_dir) / ENSEMBLE_DIR)
        test = parts["test"]
        test_expanded = ds.poly_features(test, ensemble.poly_degree)
        ensemble_metrics = learner.evaluate(ensemble, test)
        member_metrics = [learner.evaluate(member, test_expanded) for member in ensemble.members]
        out = Path(output_dir)
        report: Dict[str, Any] = {
            "dataset": str(dataset_path),
            "task": ensemble.task,
            "test_records": len(test),
            "ensemble": ensemble_metrics.to_dict(),
            "members": [m.to_dict() for m in member_metrics],
            "config": dict(config),
        }
        if ensemble.task == "regression":
            baseline = learner.fit_poly_baseline(
                parts["train"], test, degree=config["baseline_degree"], max_features=config["baseline_max_features"]
            )
            table = learner.regression_table([m.mae for m in member_metrics], ensemble_metrics.mae, baseline)
            report_repo.write_table(table, out / "mae_table.csv")
            report["baseline_mae"] = baseline
            report["typical_mae"] = float(np.median([m.mae for m in member_metrics]))
            report["probes"] = _probe_report(ensemble, d)
        else:
            best = int(np.argmax([m.accuracy for m in member_metrics]))
            report_repo.write_table(learner.confusion_table(ensemble_metrics.confusion), out / "confusion_ensemble.csv", index=True)
            report_repo.write_table(learner.confusion_table(member_metrics[best].confusion), out / "confusion_best_member.csv", index=True)
            report["best_member"] = best
        report_repo.write_report(report, out / "eval.yaml")
        return {
            "report": str(out / "eval.yaml"),
            "mae": ensemble_metrics.mae,
            "accuracy": ensemble_metrics.accuracy,
            "typical_mae": report.get("typical_mae"),
            "probes": report.get("probes", []),
        }

    return _guarded("eval", work)


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

def _search_point(params: np.ndarray) -> Tuple[float, scenario.TripartiteCorrelators]:
    theta = float(np.clip(params[0], 1e-3, np.pi / 2 - 1e-3))
    return theta, sampler.quantum_swap_nonmax(theta, sampler.swap_settings_from_angles(params[1:]))


def candidate_status(predicted: float, exact: Optional[float], inequality: float) -> str:
    """探索候補の判定。発見はモデルが NBL > 下限と予測し、オラクルも同じく確かめた点だけ。"""
    if inequality > 1.0 + BOUNDARY_MARGIN:
        return "violates-inequality"
    if inequality > 1.0 - BOUNDARY_MARGIN:
        return "boundary"
    if exact is None:
        return "domain-error"
    if predicted <= DISCOVERY_FLOOR:
        return "not-flagged"
    if exact > DISCOVERY_FLOOR:
        return "discovery"
    return "unconfirmed"


def is_interior(inequality: float) -> bool:
    return inequality <= 1.0 - BOUNDARY_MARGIN


def search_objective(predicted: float, inequality: float) -> float:
    """予測 NBL から、不等式値が 1 - PENALTY_SLACK を超えた分に比例するペナルティを引く。"""
    return predicted - SEARCH_PENALTY * max(0.0, inequality - (1.0 - PENALTY_SLACK))


def search_hidden_nonlocality(
    ensemble: learner.EnsembleModel,
    scenario_name: str,
    restarts: int,
    certify: int,
    nu_grid: int,
    seed: int,
) -> List[Dict[str, Any]]:
    """
    (θ, 8 測定角) について search_objective を Nelder-Mead で最大化する。
    不等式の内側に残った最適点のうち予測値の上位 certify 点を厳密オラクルで検証する。
    検証しなかった行は exact = None、certified = False で返す。
    """

    def score(params):
        _, t = _search_point(params)
        predicted = float(learner.ensemble_predict(ensemble, _raw_point(scenario_name, t)[None, :])[0])
        return search_objective(predicted, sampler.ij_violation(t))

    rng = sampler.make_rng(seed)
    optima = []
    for restart in range(restarts):
        start = np.concatenate([[rng.uniform(0.05, np.pi / 2 - 0.05)], rng.uniform(-np.pi, np.pi, size=8)])
        try:
            result = minimize(lambda p: -score(p), start, method="Nelder-Mead", options={"maxiter": 2000, "xatol": 1e-6, "fatol": 1e-9})
        except Exception as exc:
            raise SearchFailed(f"optimizer failed on restart {restart}: {exc}") from exc
        if not np.all(np.isfinite(result.x)):
            raise SearchFailed(f"optimizer returned a non-finite point on restart {restart}")
        optima.append(result.x)

    rows = []
    for params in optima:
        theta, t = _search_point(params)
        raw = _raw_point(scenario_name, t)
        rows.append({
            "theta": theta,
            "angles": [float(a) for a in params[1:]],
            "predicted": float(learner.ensemble_predict(ensemble, raw[None, :])[0]),
            "inequality": sampler.ij_violation(t),
            "point": t,
        })
    rows.sort(key=lambda r: r["predicted"], reverse=True)
    to_certify = {id(r) for r in [r for r in rows if is_interior(r["inequality"])][:certify]}

    out = []
    for row in rows:
        exact = None
        certified = id(row) in to_certify
        if certified:
            point = scenario.ij_point(row["point"]) if scenario_name == "bilocal4" else row["point"]
            try:
                exact = lp_engine.nbl_distance(point, grid=nu_grid).nbl
            except DomainError:
                logger.warning("search candidate theta=%.4f is outside the oracle's domain", row["theta"])
        if certified or not is_interior(row["inequality"]):
            status = candidate_status(row["predicted"], exact, row["inequality"])
        else:
            status = "uncertified"
        if certified:
            logger.info("search candidate theta=%.4f predicted=%.4g exact=%s status=%s", row["theta"], row["predicted"], exact, status)
        out.append({
            **{k: v for k, v in row.items() if k != "point"},
            "exact": exact,
            "certified": certified,
            "status": status,
        })
    return out


def search_verdict(rows: Sequence[Mapping[str, Any]]) -> None:
    """
    発見が無いときの結論。内側の候補をオラクルが NBL ≈ 0 と答えた場合だけモデルの反証 (SearchRefuted)、
    検証できる候補が無かった場合は探索自体の失敗 (SearchFailed)。
    """
    answered = [r for r in rows if r["certified"] and r["exact"] is not None]
    if any(r["exact"] <= DISCOVERY_FLOOR for r in answered):
        best = max(r["predicted"] for r in answered)
        reason = "the ensemble predicts no hidden nonlocality" if best <= DISCOVERY_FLOOR else "no prediction was confirmed by the exact oracle"
        raise SearchRefuted(f"search refuted: {reason}")
    certified = [r for r in rows if r["certified"]]
    if not certified:
        raise SearchFailed(
            "search failed: no optimum stayed inside the bilocal inequality",
            diagnostics={"statuses": sorted({r["status"] for r in rows})},
        )
    if not answered:
        raise SearchFailed("search failed: every certified candidate was outside the oracle's domain")
    raise SearchFailed("search failed: the oracle found nonlocality the ensemble did not flag")


def run_search(config: Mapping[str, Any], model_dir: str, output_dir: str) -> Dict[str, Any]:
    def work():
        ensemble, manifest = model_repo.load_ensemble(Path(model_dir) / ENSEMBLE_DIR)
        scenario_name, _ = _scenario_of(manifest)
        if scenario_name not in ("bilocal4", "bilocal10") or ensemble.task != "regression":
            raise UsageError(f"search needs a bilocal regression ensemble, got {scenario_name!r}")
        rows = search_hidden_nonlocality(
            ensemble, scenario_name, config["search_restarts"], config["search_certify"], config["nu_grid"], config["seed"]
        )
        out = Path(output_dir)
        frame = pd.DataFrame([
            {"theta": r["theta"], **{f"angle{i}": a for i, a in enumerate(r["angles"])},
             "predicted": r["predicted"], "exact": r["exact"], "inequality": r["inequality"],
             "certified": r["certified"], "status": r["status"]}
            for r in rows
        ])
        report_repo.write_table(frame, out / "search.csv")
        report_repo.write_report({"candidates": rows, "config": dict(config)}, out / "search.yaml")
        discoveries = [r for r in rows if r["status"] == "discovery"]
        if not discoveries:
            search_verdict(rows)
        return {"discoveries": discoveries, "candidates": len(rows), "csv": str(out / "search.csv")}

    return _guarded("search", work)


# ---------------------------------------------------------------------------
# bench / curve / transfer
# ---------------------------------------------------------------------------

def _nbl_quietly(point, grid: int) -> None:
    try:
        lp_engine.nbl_distance(point, grid=grid)
    except DomainError:
        logger.debug("bench point outside the quantifier domain")


def _bench_point(scenario_name: str, m: int, rng: np.random.Generator, config: Mapping[str, Any]):
    """(生の特徴量, オラクル呼び出し) を返す。"""
    if scenario_name == "bipartite":
        c = sampler.sample_bipartite(m, rng)
        return c.values, lambda: lp_engine.nl_distance(c, m)
    if scenario_name == "classification":
        c = sampler.sample_bipartite(2, rng)
        return c.values, lambda: analytic_classifier.classify(c)
    draw = sampler.sample_tripartite if scenario_name == "bilocal10" else sampler.sample_ij
    point = draw(rng, max_attempts=config["max_attempts"])
    return point.vector, lambda: _nbl_quietly(point, config["nu_grid"])


def run_bench(config: Mapping[str, Any], model_dir: str, points: Optional[int] = None) -> Dict[str, Any]:
    """オラクルとアンサンブル予測の 1 点あたり所要時間 (中央値) と速度比。"""

    def work():
        n = config["bench_points"] if points is None else points
        if n <= 0:
            raise UsageError("bench needs at least one point")
        ensemble, manifest = model_repo.load_ensemble(Path(model_dir) / ENSEMBLE_DIR)
        scenario_name, m = _scenario_of(manifest)
        rng = sampler.make_rng(config["seed"])
        oracle_times, predict_times = [], []
        for _ in range(n):
            raw, oracle = _bench_point(scenario_name, m, rng, config)
            started = time.perf_counter()
            oracle()
            oracle_times.append(time.perf_counter() - started)
            started = time.perf_counter()
            learner.ensemble_predict(ensemble, np.asarray(raw)[None, :])
            predict_times.append(time.perf_counter() - started)
        oracle_median = float(np.median(oracle_times))
        predict_median = float(np.median(predict_times))
        return {
            "scenario": scenario_name,
            "points": n,
            "oracle_median_seconds": oracle_median,
            "predict_median_seconds": predict_median,
            "speedup": oracle_median / predict_median if predict_median > 0 else None,
        }

    return _guarded("bench", work)


def run_curve(config: Mapping[str, Any], dataset_path: str, sizes: Sequence[int], output: str) -> Dict[str, Any]:
    def work():
        d = dataset_repo.load_dataset(dataset_path)
        pool, test = ds.split(d, SplitSpec(config["train_fraction"], config["seed"]))
        scenario_name = d.metadata.get("scenario", config["scenario"])
        mlp_config = _base_mlp_config(config, d.task, scenario_name)
        curve = learner.learning_curve(pool, test, sizes, mlp_config, val_fraction=config["val_fraction"])
        plateau = learner.detect_plateau(curve)
        frame = pd.DataFrame(curve, columns=["n", "error"])
        path = report_repo.write_table(frame, output)
        return {"csv": str(path), "curve": curve, "plateau": plateau}

    return _guarded("curve", work)


def run_transfer(config: Mapping[str, Any], model_dir: str, output: str, points: Optional[int] = None) -> Dict[str, Any]:
    """NS で学習したモデルを量子点 (任意の m での θ 掃引、または Werner 可視度掃引) に適用し、厳密値と比べる。"""

    def work():
        n = points or config["transfer_points"]
        ensemble, manifest = model_repo.load_ensemble(Path(model_dir) / ENSEMBLE_DIR)
        scenario_name, m = _scenario_of(manifest)
        if scenario_name == "bipartite":
            parameters = np.linspace(0.02, np.pi / 2 - 0.02, n)
            choice = config.get("transfer_settings", "auto")
            quantum = ds.gen_quantum_bipartite(
                parameters, config=config, m=m, settings=None if choice == "auto" else choice, seed=config["seed"]
            )
            name = "theta"
        elif scenario_name in ("bilocal4", "bilocal10"):
            parameters = np.linspace(0.0, 1.0, n)
            quantum = ds.gen_quantum_bilocal(scenario_name, parameters, nu_grid=config["nu_grid"], config=config)
            name = "visibility"
        else:
            raise UsageError(f"transfer is defined for bipartite and bilocal ensembles, got {scenario_name!r}")
        predicted = learner.ensemble_predict(ensemble, quantum.features)
        frame = pd.DataFrame({name: parameters, "exact": quantum.targets, "predicted": predicted})
        if name == "visibility":
            frame["analytic"] = np.maximum(0.0, parameters ** 2 - 0.5)
        path = report_repo.write_table(frame, output)
        mae = float(np.mean(np.abs(predicted - quantum.targets)))
        logger.info("transfer MAE on %d quantum points: %.6g", n, mae)
        return {"csv": str(path), "mae": mae, "points": n}

    return _guarded("transfer", work)
