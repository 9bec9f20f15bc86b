"""
Benchmark Suite for tmc-transfer
Runs the slow synthetic benchmarks the unit tests leave out
Validates transfer benefit, matching robustness, LOIO runtime and determinism
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path
from typing import Dict

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from tmc_transfer.config import RunConfig, configure_logging, derive_seed
from tmc_transfer.datagen import ShiftSpec, generate_network, generate_transfer_benchmark
from tmc_transfer.domain_model import (
    DURATION_FEATURES, EVENT_FEATURES, INTERVAL_SECONDS, Dataset, FeatureVector, variable_indices,
)
from tmc_transfer.evaluation import build_factories, loio_evaluate, mae, make_regressor
from tmc_transfer.matching import match_intersections
from tmc_transfer.pipeline import TransferPipeline, resolve_variables

SHIFT = ShiftSpec(demand_scale=1.5, profile_rotation=2, turn_fraction_jitter=0.15)


def noisy_copy(dataset: Dataset, scale: float, seed: int) -> Dataset:
    """Multiplicative noise on the event features, durations kept inside the interval"""
    rng = np.random.default_rng(seed)
    events = variable_indices(EVENT_FEATURES)
    durations = variable_indices(DURATION_FEATURES)
    instances = []
    for inst in dataset:
        values = inst.features.to_array()
        values[events] = np.maximum(values[events] * (1.0 + scale * rng.standard_normal(len(events))), 0.0)
        values[durations] = np.minimum(values[durations], INTERVAL_SECONDS)
        instances.append(dataclasses.replace(inst, features=FeatureVector.from_array(values)))
    return Dataset(instances)


class BenchmarkSuite:
    """Synthetic benchmarks with pass/fail thresholds"""

    def __init__(self, quick: bool = False, jobs: int = 1):
        print("Initializing benchmark suite...")
        self.quick = quick
        self.jobs = jobs
        self.config = RunConfig()
        self.timings = []
        print(f"✓ Suite ready ({'quick' if quick else 'full'} mode, {jobs} workers)\n")

    def transfer_benefit(self) -> Dict:
        """
        TL vs source-only AdaBoost.R2 on a shifted target
        Pass: TL through MAE <= baseline in >= 80% of seeds, mean improvement >= 10%
        """
        print("\n" + "="*70)
        print("TRANSFER BENEFIT UNDER DOMAIN SHIFT")
        print("="*70 + "\n")

        seeds = range(3) if self.quick else range(10)
        wins = 0
        improvements = []
        start_time = time.time()

        for seed in seeds:
            bench = generate_transfer_benchmark(10, 2, SHIFT, seed)
            source = bench.source.dataset
            target = bench.target.without_labels()
            truth = bench.target.labels("v_tm")

            config = self.config.model_copy(update={"seed": seed})
            pipeline = TransferPipeline(source, config, self.jobs)
            tl = pipeline.run(target).predictions["v_tm_hat"].to_numpy()

            variables = resolve_variables(pipeline.selection)
            baseline = make_regressor("AdaBoost", config, derive_seed(seed, 12))
            baseline.fit(source.features(variables), source.labels("v_tm"))
            base = np.maximum(baseline.predict(target.features(variables)), 0.0)

            tl_mae, base_mae = mae(truth, tl), mae(truth, base)
            wins += tl_mae <= base_mae
            improvements.append((base_mae - tl_mae) / base_mae if base_mae > 0 else 0.0)
            print(f"  seed {seed}: TL {tl_mae:7.2f}  AdaBoost {base_mae:7.2f}")

        total_time = time.time() - start_time
        self.timings.append(('Transfer benefit', total_time))
        share = wins / len(seeds)
        mean_improvement = float(np.mean(improvements))
        print(f"\n✓ Completed in {total_time:.1f}s")
        print(f"TL wins: {wins}/{len(seeds)}, mean relative improvement {mean_improvement*100:.1f}%")

        passed = share >= 0.8 and mean_improvement >= 0.10
        print("\n✅ PASS: Transfer benefit" if passed else "\n❌ FAIL: Transfer benefit")
        return {'success': passed, 'wins': wins, 'improvement': mean_improvement}

    def matching_robustness(self) -> Dict:
        """
        Target = copy of source intersection k, exact and with 1% noise
        Pass: every exact copy matches k, noisy copies match k in >= 4/5 seeds
        """
        print("\n" + "="*70)
        print("MATCHING SELF-TEST")
        print("="*70 + "\n")

        network = generate_network(10, 2, seed=0)
        dataset = network.dataset
        variables = ["o_tm", "d_tm", "g_tm", "m_tm", "o_lm", "d_lm", "g_lm"]
        exact_hits = 0
        noisy_hits = []

        for k in dataset.intersection_ids:
            copy = dataset.for_intersection(k)
            exact = match_intersections(dataset, copy, variables).chosen == k
            exact_hits += exact
            hits = sum(
                match_intersections(dataset, noisy_copy(copy, 0.01, seed), variables).chosen == k
                for seed in range(5)
            )
            noisy_hits.append(hits)
            print(f"  {k}: exact {'✓' if exact else '✗'}, noisy {hits}/5")

        passed = exact_hits == len(dataset.intersection_ids) and min(noisy_hits) >= 4
        print(f"\nExact copies matched: {exact_hits}/{len(dataset.intersection_ids)}")
        print("\n✅ PASS: Matching self-test" if passed else "\n❌ FAIL: Matching self-test")
        return {'success': passed, 'exact_hits': exact_hits}

    def loio_timing(self) -> Dict:
        """
        All four models over a 30-intersection, 2-day network
        Pass: every fold succeeds and RMSE >= MAE >= 0 in every cell
        """
        print("\n" + "="*70)
        print("LEAVE-ONE-INTERSECTION-OUT HARNESS")
        print("="*70 + "\n")

        n = 8 if self.quick else 30
        dataset = generate_network(n, 2, seed=1).dataset
        start_time = time.time()
        report = loio_evaluate(dataset, build_factories(self.config), self.config, self.jobs, progress=True)
        total_time = time.time() - start_time
        self.timings.append(('LOIO', total_time))

        mae_table, rmse_table = report.mae_table(), report.rmse_table()
        print("\nMAE")
        print(mae_table.round(2).to_string())
        print("RMSE")
        print(rmse_table.round(2).to_string())
        print(f"\n✓ Completed in {total_time/60:.1f} min")

        complete = not report.failures and all(c == n for c in report.fold_counts().values())
        ordered = bool((mae_table.to_numpy() >= 0).all() and (rmse_table.to_numpy() >= mae_table.to_numpy()).all())
        passed = complete and ordered
        print("\n✅ PASS: LOIO harness" if passed else "\n❌ FAIL: LOIO harness")
        return {'success': passed, 'time': total_time}

    def determinism(self) -> Dict:
        """Two identical runs give identical plans"""
        print("\n" + "="*70)
        print("DETERMINISM")
        print("="*70 + "\n")

        bench = generate_transfer_benchmark(6, 1, SHIFT, 4)
        target = bench.target.without_labels()
        first = TransferPipeline(bench.source.dataset, self.config, 1).run(target)
        second = TransferPipeline(bench.source.dataset, self.config, self.jobs).run(target)
        passed = first.plan.to_dict() == second.plan.to_dict() and first.predictions.equals(second.predictions)
        print("✅ PASS: Determinism" if passed else "❌ FAIL: Determinism")
        return {'success': passed}

    def run_full_suite(self) -> Dict:
        """Run every benchmark"""
        print("\n" + "="*70)
        print("TMC TRANSFER BENCHMARK SUITE")
        print("="*70)

        benchmarks = [
            ("Transfer benefit", self.transfer_benefit),
            ("Matching self-test", self.matching_robustness),
            ("LOIO harness", self.loio_timing),
            ("Determinism", self.determinism),
        ]

        results = {}
        for name, benchmark in benchmarks:
            try:
                results[name] = benchmark()
            except Exception as e:
                print(f"\n❌ {name} CRASHED: {str(e)}")
                results[name] = {'success': False}

        print("\n" + "="*70)
        print("FINAL SUMMARY")
        print("="*70 + "\n")

        passed = sum(1 for v in results.values() if v.get('success', False))
        for name, result in results.items():
            status = "✅ PASS" if result.get('success', False) else "❌ FAIL"
            print(f"{status}: {name}")
        for name, seconds in self.timings:
            print(f"⏱  {name}: {seconds:.1f}s")

        print(f"\nTotal: {passed}/{len(results)} benchmarks passed")
        return {'success': passed == len(results)}


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the tmc-transfer synthetic benchmarks")
    parser.add_argument("--quick", action="store_true", help="fewer seeds and a smaller LOIO network")
    parser.add_argument("--jobs", type=int, default=1)
    cli_args = parser.parse_args()

    configure_logging()
    suite = BenchmarkSuite(quick=cli_args.quick, jobs=cli_args.jobs)
    result = suite.run_full_suite()
    sys.exit(0 if result['success'] else 1)
