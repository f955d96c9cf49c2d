#!/usr/bin/env python3
"""
Tests for the equivalence harness and the benchmark
"""
import random
import unittest
from fractions import Fraction
import streamopt
from streamopt import Event, Observation


def typed(text):
    return streamopt.infer_types(streamopt.parse_spec(text))


def altlat_trace(duration="1s", seed=0):
    options = streamopt.CORPUS_TRACES["altlat"]
    return streamopt.generate_trace(streamopt.parse_spec(streamopt.ALTLAT_SPEC), duration, seed,
                                    options["rates"], options["ranges"])


def broken(ts):
    # negates the first trigger
    spec = ts.to_spec()
    spec.triggers[0].condition = streamopt.negate(spec.triggers[0].condition)
    report = streamopt.PassReport("broken")
    report.count("constants_folded")
    return streamopt.infer_types(spec), report


def failing(ts):
    raise streamopt.PassError("cannot optimize")


class TestDivergence(unittest.TestCase):
    def test_identical(self):
        obs = [Observation(1, 0, "x"), Observation(2, 1, "y")]
        self.assertIsNone(streamopt.first_divergence((obs, None, None), (list(obs), None, None)))
    def test_differentObservation(self):
        self.assertEqual(streamopt.first_divergence(([Observation(1, 0)], None), ([Observation(2, 0)], None)),
                         (0, 1))
        self.assertEqual(streamopt.first_divergence(([Observation(1, 0)], None), ([Observation(1, 1)], None)),
                         (0, 1))
    def test_missingObservation(self):
        reference = ([Observation(1, 0), Observation(2, 0)], None)
        self.assertEqual(streamopt.first_divergence(reference, ([Observation(1, 0)], None)), (1, 2))
        self.assertEqual(streamopt.first_divergence(([Observation(1, 0)], None), reference), (1, 2))
    def test_referenceFault(self):
        reference = ([Observation(1, 0)], 2)
        candidate = ([Observation(1, 0), Observation(3, 0)], None)
        self.assertIsNone(streamopt.first_divergence(reference, candidate))
        self.assertIsNone(streamopt.first_divergence(reference, ([Observation(1, 0)], 2)))
    def test_earlierCandidateFault(self):
        self.assertEqual(streamopt.first_divergence(([Observation(1, 0)], None), ([], 1)), (0, 1))
        self.assertEqual(streamopt.first_divergence(([], 3), ([], 2)), (0, 2))
    def test_observe(self):
        ts = typed('input a, b: Int64\noutput q := a / b\ntrigger q > 0 "positive"\n')
        events = [Event(1, {"a": 4, "b": 2}), Event(2, {"a": 1, "b": 0}), Event(3, {"a": 4, "b": 2})]
        observations, fault, stats = streamopt.observe(ts, events)
        self.assertEqual(observations, [Observation(1, 0, "positive")])
        self.assertEqual(fault, 2)
        self.assertIsNone(stats)
        observations, fault, stats = streamopt.observe(ts, events[:1])
        self.assertIsNone(fault)
        self.assertEqual(stats.cycle_count, 1)


class TestHarness(unittest.TestCase):
    def test_passVariants(self):
        ts = typed(streamopt.ALTLAT_SPEC)
        variants, skipped = streamopt.pass_variants(ts, "sccp,ptr")
        self.assertEqual([name for name, _ in variants], ["sccp", "ptr", "pipeline"])
        self.assertEqual(skipped, [])
        variants, _ = streamopt.pass_variants(ts, "ptr")
        self.assertEqual([name for name, _ in variants], ["ptr"])
        variants, skipped = streamopt.pass_variants(ts, [failing, "dse"])
        self.assertEqual([name for name, _ in variants], ["dse"])
        self.assertEqual(skipped, ["failing: cannot optimize", "pipeline: cannot optimize"])
    def test_altlat(self):
        options = streamopt.CORPUS_TRACES["altlat"]
        verdict = streamopt.equivalence_harness(streamopt.parse_spec(streamopt.ALTLAT_SPEC), seeds=3,
                                                duration="2s", rates=options["rates"], ranges=options["ranges"])
        self.assertTrue(verdict.ok)
        self.assertEqual(verdict["traces"], 3)
        self.assertEqual(verdict["comparisons"], 3 * (len(streamopt.PIPELINE_ORDER) + 1))
        self.assertEqual(verdict["divergences"], 0)
        self.assertTrue(verdict.get()["equivalent"])
    def test_brokenPass(self):
        options = streamopt.CORPUS_TRACES["altlat"]
        verdict = streamopt.equivalence_harness(typed(streamopt.ALTLAT_SPEC), [broken], seeds=[4, 5],
                                                duration="1s", rates=options["rates"], ranges=options["ranges"])
        self.assertFalse(verdict.ok)
        self.assertEqual(verdict["divergences"], 2)
        self.assertEqual([f["seed"] for f in verdict.failures], [4, 5])
        failure = verdict.failures[0]
        self.assertEqual(failure["variant"], "broken")
        self.assertEqual(failure["index"], 0)
        self.assertEqual(failure["time"], Fraction(1, 10))
        self.assertEqual(len(failure["counterexample"]), 10)
        self.assertEqual(failure["counterexample"][-1].time, Fraction(1, 10))
        self.assertIn('trigger check_alt && check_lat "bounds violated"\n', failure["spec"])
        report = verdict.get()
        self.assertFalse(report["equivalent"])
        self.assertEqual(report["failures"][0], {"variant": "broken", "seed": 4, "index": 0,
                                                 "time": "0.1", "events": 10})
    def test_counterexampleReplays(self):
        ts = typed(streamopt.ALTLAT_SPEC)
        verdict = streamopt.equivalence_harness(ts, [broken], seeds=1, duration="1s")
        failure = verdict.failures[0]
        variant = broken(ts)[0]
        divergence = streamopt.first_divergence(streamopt.observe(ts, failure["counterexample"]),
                                                streamopt.observe(variant, failure["counterexample"]))
        self.assertEqual(divergence, (failure["index"], failure["time"]))
    def test_emptyTrace(self):
        verdict = streamopt.equivalence_harness(typed(streamopt.ALTLAT_SPEC), [broken], seeds=2, duration=0)
        self.assertTrue(verdict.ok)
        self.assertEqual(verdict["comparisons"], 2)
    def test_skippedPass(self):
        verdict = streamopt.equivalence_harness(typed(streamopt.ALTLAT_SPEC), [failing], seeds=1, duration="1s")
        self.assertTrue(verdict.ok)
        self.assertEqual(verdict.skipped, ["failing: cannot optimize"])
        self.assertEqual(verdict["comparisons"], 0)
    def test_sharedVerdict(self):
        verdict = streamopt.EquivalenceVerdict()
        for name in ("altlat", "pilots"):
            options = streamopt.CORPUS_TRACES[name]
            streamopt.equivalence_harness(typed(streamopt.bundled_spec(name)), "fr", seeds=1, duration="1s",
                                          rates=options.get("rates"), ranges=options.get("ranges"),
                                          biases=options.get("biases"), verdict=verdict)
        self.assertEqual(verdict["traces"], 2)
        self.assertTrue(verdict.ok)
    def test_randomSpecs(self):
        # "0-52" evaluates an empty Float64 sum window inside arithmetic
        for label in ["harness-{}".format(index) for index in range(40)] + ["0-52"]:
            rng = random.Random(label)
            spec = streamopt.random_spec(rng)
            options = streamopt.random_trace_options(spec, rng)
            verdict = streamopt.equivalence_harness(spec, "all", seeds=2, duration="2s",
                                                    rates=options["rates"], ranges=options["ranges"])
            self.assertTrue(verdict.ok, "{}\n{}\n{}".format(label, streamopt.pretty(spec), verdict.failures))


class TestBench(unittest.TestCase):
    def test_ptr(self):
        ts = typed(streamopt.ALTLAT_SPEC)
        report = streamopt.bench(ts, altlat_trace(), passes="ptr", repeat=2)
        self.assertTrue(report["equivalent"])
        original = report.variant("original")
        refined = report.variant("ptr")
        self.assertEqual(original["streams"], 2)
        self.assertEqual(original["cycles"], 100)
        self.assertEqual(original["total_evaluations"], 120)
        self.assertEqual(refined["total_evaluations"], 30)
        self.assertEqual(refined["observations"], original["observations"])
        self.assertTrue(refined["equivalent"])
        self.assertGreaterEqual(refined["median_wall_time_ns"], 0)
        self.assertRaises(KeyError, report.variant, "pipeline")
        self.assertEqual(sorted(report.get()), ["equivalent", "original", "ptr"])
    def test_all(self):
        report = streamopt.bench(typed(streamopt.ALTLAT_SPEC), altlat_trace(), repeat=1)
        names = [inst.name for inst in report._instances]
        self.assertEqual(names, ["original"] + list(streamopt.PIPELINE_ORDER) + ["pipeline"])
        self.assertEqual(report.variant("pipeline")["total_evaluations"], 30)
    def test_brokenPass(self):
        report = streamopt.bench(typed(streamopt.ALTLAT_SPEC), altlat_trace(), passes=[broken], repeat=1)
        self.assertFalse(report["equivalent"])
        self.assertFalse(report.variant("broken")["equivalent"])
        self.assertIn("broken.equivalent\tFalse\n", report.get_text())
    def test_errors(self):
        ts = typed(streamopt.ALTLAT_SPEC)
        self.assertRaises(ValueError, streamopt.bench, ts, [], repeat=0)
        self.assertRaises(streamopt.PassError, streamopt.bench, ts, [], passes=[failing])
        faulty = typed('input a, b: Int64\noutput q := a / b\ntrigger q > 0 "positive"\n')
        self.assertRaises(streamopt.RuntimeFault, streamopt.bench, faulty,
                          [Event(1, {"a": 1, "b": 0})], passes="dse", repeat=1)


if __name__ == '__main__':
    unittest.main()
