#!/usr/bin/env python3
"""
Tests for type inference, the dependency graph, evaluation order, memory bounds and schedules
"""
import unittest
from fractions import Fraction
import streamopt
from streamopt import Literal, Sync, Binary, AcInput, AcAnd, EventBased, Periodic, Frequency


def typed(text):
    return streamopt.infer_types(streamopt.parse_spec(text))


class TestInference(unittest.TestCase):
    def test_altlat(self):
        ts = typed(streamopt.ALTLAT_SPEC)
        self.assertEqual(ts.pacing("alt"), EventBased(AcInput("alt")))
        self.assertEqual(ts.pacing("check_alt"), EventBased(AcInput("alt")))
        self.assertEqual(ts.pacing("check_lat"), EventBased(AcInput("lat")))
        self.assertEqual(ts.pacing("trigger[0]"), EventBased(AcAnd([AcInput("alt"), AcInput("lat")])))
        self.assertEqual(str(ts.pacing("trigger[0]")), "@{alt && lat}")
        self.assertEqual(ts.vtype("check_lat"), "Bool")
        self.assertEqual(ts.get("check_alt").provenance, "inferred")
        self.assertEqual(ts.get("trigger[0]").message, "bounds violated")
    def test_gps(self):
        ts = typed(streamopt.GPS_SPEC)
        self.assertEqual(ts.pacing("gps_readings"), Periodic(Frequency(1)))
        self.assertEqual(ts.get("gps_readings").provenance, "annotated")
        self.assertEqual(ts.vtype("gps"), ("Float64", "Float64"))
    def test_pilots(self):
        ts = typed(streamopt.PILOTS_SPEC)
        self.assertEqual(str(ts.pacing("trigger[0]")), "@{emergency && pilots}")
    def test_literalPromotion(self):
        ts = typed("input a: Float64\noutput x := a + 1\noutput y: Float64 @{a} := 2\n")
        self.assertEqual(ts.get("x").expression, Binary("+", Sync("a"), Literal(1.0, "Float64")))
        self.assertEqual(ts.vtype("x"), "Float64")
        self.assertEqual(ts.get("y").expression, Literal(2.0, "Float64"))
    def test_windowTypes(self):
        ts = typed("input a: Int64\ninput b: Bool\n"
                   "output c @1Hz := a.aggregate(over: 1s, using: count)\n"
                   "output s @1Hz := a.aggregate(over: 1s, using: sum)\n"
                   "output m @1Hz := a.aggregate(over: 1s, using: avg).defaults(to: 0)\n"
                   "output e @1Hz := b.aggregate(over: 1s, using: exists)\n")
        self.assertEqual([ts.vtype(n) for n in "csme"], ["Int64", "Int64", "Float64", "Bool"])
        self.assertEqual(ts.get("m").expression.default, Literal(0.0, "Float64"))
    def test_recursiveDefault(self):
        ts = typed("input a: Int64\noutput x := a + x.offset(by: -1).defaults(to: 0)\n")
        self.assertEqual(ts.vtype("x"), "Int64")
        self.assertEqual(ts.pacing("x"), EventBased(AcInput("a")))
    def test_roundTripMaterialized(self):
        ts = typed(streamopt.ALTLAT_SPEC)
        text = streamopt.pretty(ts.to_spec(materialize=True))
        self.assertIn("output check_alt @{alt} := alt < 3.0\n", text)
        self.assertIn('trigger @{alt && lat} !(check_alt && check_lat) "bounds violated"\n', text)
        retyped = typed(text)
        self.assertEqual([(s.name, s.vtype, s.pacing) for s in retyped.streams()],
                         [(s.name, s.vtype, s.pacing) for s in ts.streams()])
        self.assertTrue(all(s.provenance == "annotated" for s in retyped.outputs + retyped.triggers))
        self.assertEqual(streamopt.pretty(ts), streamopt.ALTLAT_SPEC.split("\n", 1)[1]
                         .replace("input alt, lat: Float64", "input alt: Float64\ninput lat: Float64"))


class TestInferenceErrors(unittest.TestCase):
    def test_noSyncAccess(self):
        self.assertRaises(streamopt.InferenceError, typed, "input a: Int64\noutput x := 1\n")
        self.assertRaises(streamopt.InferenceError, typed, "input a: Int64\noutput x := a.hold(or: 0)\n")
    def test_cyclicInference(self):
        self.assertRaises(streamopt.InferenceError, typed, "input a: Int64\noutput x: Int64 := a + y\noutput y: Int64 := x + 1\n")
    def test_kindMix(self):
        self.assertRaises(streamopt.KindMixError, typed,
                          "input a: Int64\noutput p @1Hz := a.hold(or: 0)\noutput x := p + 1\n")
        self.assertRaises(streamopt.KindMixError, typed, "input a: Int64\noutput p @1Hz := a\n")
    def test_incompatiblePacing(self):
        with self.assertRaises(streamopt.IncompatiblePacingError) as ctx:
            typed("input a, b: Int64\noutput x @{a} := a + b\n")
        self.assertEqual(ctx.exception.position, (2, 8))
        self.assertRaises(streamopt.IncompatiblePacingError, typed,
                          "input a: Int64\noutput p @2Hz := a.hold(or: 0)\noutput q @3Hz := p\n")
    def test_periodicSync(self):
        ts = typed("input a: Int64\noutput p @2Hz := a.hold(or: 0)\noutput q @1Hz := p\n")
        self.assertEqual(ts.pacing("q"), Periodic(Frequency(1)))
    def test_valueTypes(self):
        self.assertRaises(streamopt.ValueTypeError, typed, "input a: Int64\noutput x := a && true\n")
        self.assertRaises(streamopt.ValueTypeError, typed, "input a: Int64\ninput b: Float64\noutput x := a + b\n")
        self.assertRaises(streamopt.ValueTypeError, typed, "input a: Int64\noutput x: Bool := a + 1\n")
        self.assertRaises(streamopt.ValueTypeError, typed, "input a: Int64\noutput x := if a then 1 else 2\n")
        self.assertRaises(streamopt.ValueTypeError, typed, "input a: Int64\noutput x := a.0\n")
        self.assertRaises(streamopt.ValueTypeError, typed, "input a: Bool\noutput x @1Hz := a.aggregate(over: 1s, using: sum)\n")
        self.assertRaises(streamopt.ValueTypeError, typed, "input a: Int64\noutput x := a + x\n")
    def test_typeErrorsAreTypeCheckErrors(self):
        self.assertRaises(streamopt.TypeCheckError, typed, "input a: Int64\noutput x := !a\n")


class TestGraph(unittest.TestCase):
    def test_edges(self):
        ts = typed("input a: Int64\n"
                   "output x := a.offset(by: -2).defaults(to: 0) + a\n"
                   "output y @{a} := x.hold(or: 1)\n"
                   "output w @1Hz := y.aggregate(over: 3s, using: count)\n")
        graph = streamopt.build_dependency_graph(ts)
        self.assertEqual(graph.nodes, ["a", "x", "y", "w"])
        edges = [(e.source, e.target, e.kind, e.offset, e.duration) for e in graph.edges]
        self.assertEqual(edges, [("x", "a", "sync", -2, None), ("x", "a", "sync", 0, None),
                                 ("y", "x", "hold", 0, None), ("w", "y", "window", 0, Fraction(3))])
        self.assertEqual(len(graph.incoming("a")), 2)
        self.assertEqual(streamopt.memory_bounds(graph), {"a": 3, "x": 1, "y": 1, "w": 1})
        self.assertEqual(streamopt.window_bounds(graph), {"y": Fraction(3)})
    def test_filterNodes(self):
        ts = typed("input a: Int64\noutput x { filter a > 0 } := a\ntrigger x > 3\n")
        graph = streamopt.build_dependency_graph(ts)
        self.assertEqual(graph.nodes, ["a", "x", "x.filter", "trigger[0]"])
        self.assertEqual(graph.filter_of("x"), "x.filter")
        self.assertEqual(graph.stream_of("x.filter"), "x")
        self.assertIsNone(graph.filter_of("trigger[0]"))
        order = streamopt.evaluation_order(graph)
        self.assertEqual(order.layers, [["a"], ["x.filter"], ["x"], ["trigger[0]"]])
    def test_evaluationOrder(self):
        graph = streamopt.build_dependency_graph(typed(streamopt.ALTLAT_SPEC))
        order = streamopt.evaluation_order(graph)
        self.assertEqual(order.layers, [["alt", "lat"], ["check_alt", "check_lat"], ["trigger[0]"]])
        self.assertEqual(order.layer_of("trigger[0]"), 2)
        self.assertEqual(order.sequence(), ["alt", "lat", "check_alt", "check_lat", "trigger[0]"])
    def test_orderingRespectsEdges(self):
        ts = typed(streamopt.geofence_spec(6, "2d"))
        graph = streamopt.build_dependency_graph(ts)
        order = streamopt.evaluation_order(graph)
        for edge in graph.edges:
            if edge.is_ordering():
                self.assertLess(order.layer_of(edge.target), order.layer_of(edge.source))
    def test_cycle(self):
        ts = typed("input a: Int64\noutput x: Int64 @{a} := a + y\noutput y: Int64 @{a} := x + 1\n")
        with self.assertRaises(streamopt.CycleError) as ctx:
            streamopt.evaluation_order(streamopt.build_dependency_graph(ts))
        cycle = ctx.exception.cycle
        self.assertEqual(cycle[0], cycle[-1])
        self.assertEqual(set(cycle), set(["x", "y"]))
    def test_selfSyncCycle(self):
        ts = typed("input a: Int64\noutput x: Int64 := x + a\n")
        with self.assertRaises(streamopt.CycleError) as ctx:
            streamopt.evaluation_order(streamopt.build_dependency_graph(ts))
        self.assertEqual(ctx.exception.cycle, ["x", "x"])
    def test_selfPastIsAcyclic(self):
        ts = typed("input a: Int64\n"
                   "output c: Int64 @{a} := c.hold(or: 0) + 1\n"
                   "output d := d.offset(by: -1).defaults(to: 0) + a\n"
                   "output w: Int64 @1Hz := w.aggregate(over: 2s, using: count)\n")
        order = streamopt.evaluation_order(streamopt.build_dependency_graph(ts))
        self.assertEqual(order.layers, [["a"], ["c", "d", "w"]])
    def test_offsetCycleIsAcyclic(self):
        ts = typed("input a: Int64\n"
                   "output x := a + y.offset(by: -1).defaults(to: 0)\n"
                   "output y: Int64 @{a} := x\n")
        order = streamopt.evaluation_order(streamopt.build_dependency_graph(ts))
        self.assertLess(order.layer_of("x"), order.layer_of("y"))


class TestSchedule(unittest.TestCase):
    def test_deadlines(self):
        ts = typed("input a: Int64\n"
                   "output p @2Hz := a.hold(or: 0)\n"
                   "output q @3Hz := a.hold(or: 0)\n"
                   "trigger @1Hz p.hold(or: 0) > q.hold(or: 0)\n")
        schedule = streamopt.compute_schedule(ts)
        self.assertEqual(schedule.hyperperiod, Fraction(1))
        self.assertEqual(schedule.deadlines, [(Fraction(1, 3), ("q",)), (Fraction(1, 2), ("p",)),
                                              (Fraction(2, 3), ("q",)), (Fraction(1), ("p", "q", "trigger[0]"))])
        unrolled = list(schedule.unroll(2))
        self.assertEqual(len(unrolled), 8)
        self.assertEqual(unrolled[-1], (Fraction(2), ("p", "q", "trigger[0]")))
        self.assertEqual(list(schedule.unroll(Fraction(1, 4))), [])
    def test_rationalHyperperiod(self):
        ts = typed("input a: Int64\noutput p @0.4Hz := a.hold(or: 0)\noutput q @1Hz := a.hold(or: 0)\n")
        self.assertEqual(streamopt.compute_schedule(ts).hyperperiod, Fraction(5))
    def test_noPeriodicStreams(self):
        schedule = streamopt.compute_schedule(typed(streamopt.ALTLAT_SPEC))
        self.assertIsNone(schedule.hyperperiod)
        self.assertEqual(list(schedule.unroll(10)), [])
