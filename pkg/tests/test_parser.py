#!/usr/bin/env python3
"""
Tests for the specification parser and the pretty printer
"""
import random
import unittest
from fractions import Fraction
import streamopt
from streamopt import Literal, Sync, Hold, Window, Unary, Binary, Ite, TupleProj, AcInput, AcAnd, AcOr


class TestParser(unittest.TestCase):
    def test_gps(self):
        spec = streamopt.parse_spec(streamopt.GPS_SPEC)
        self.assertEqual([i.name for i in spec.inputs], ["gps"])
        self.assertEqual(spec.inputs[0].vtype, ("Float64", "Float64"))
        out = spec.output("gps_readings")
        self.assertEqual(out.vtype, "Int64")
        self.assertEqual(out.pacing, streamopt.Periodic(streamopt.Frequency(1)))
        self.assertEqual(out.expression, Window("gps", 2, "count"))
        trigger = spec.triggers[0]
        self.assertEqual(trigger.message, "GPS sensor frequency < 5Hz")
        self.assertEqual(trigger.condition, Binary("<", Sync("gps_readings"), Literal(10, "Int64")))
    def test_inputList(self):
        spec = streamopt.parse_spec(streamopt.ALTLAT_SPEC)
        self.assertEqual([(i.name, i.vtype) for i in spec.inputs], [("alt", "Float64"), ("lat", "Float64")])
        self.assertEqual(spec.names(), ["alt", "lat", "check_alt", "check_lat"])
        self.assertIsNone(spec.output("check_alt").pacing)
    def test_pacingAnnotations(self):
        spec = streamopt.parse_spec("input a, b, c: Bool\n"
                                    "output x @{a && (b || c)} := a.hold(or: false)\n"
                                    "output y @0.5Hz := 1\n"
                                    "output z @1/3Hz := 1\n"
                                    "output w @2kHz := 1\n")
        self.assertEqual(spec.output("x").pacing.condition, AcAnd([AcInput("a"), AcOr([AcInput("b"), AcInput("c")])]))
        self.assertEqual(spec.output("y").pacing.frequency, streamopt.Frequency(1, 2))
        self.assertEqual(spec.output("z").pacing.frequency, streamopt.Frequency(1, 3))
        self.assertEqual(spec.output("w").pacing.frequency, streamopt.Frequency(2000))
    def test_accesses(self):
        spec = streamopt.parse_spec("input a: Int64\n"
                                    "output x := a.offset(by: -2).defaults(to: 7)\n"
                                    "output y := a.offset(by: 0)\n"
                                    "output z @{a} := a.aggregate(over: 250ms, using: max).defaults(to: -1)\n"
                                    "output h @{a} := x.hold(or: 0)\n")
        self.assertEqual(spec.output("x").expression, Sync("a", -2, Literal(7, "Int64")))
        self.assertEqual(spec.output("y").expression, Sync("a"))
        self.assertEqual(spec.output("z").expression, Window("a", Fraction(1, 4), "max", Literal(-1, "Int64")))
        self.assertEqual(spec.output("h").expression, Hold("x", Literal(0, "Int64")))
    def test_precedence(self):
        spec = streamopt.parse_spec("input a, b: Int64\n"
                                    "output x := a + b * 2 - 1\n"
                                    "output y := a < b || !(a == 1) && b > 0\n")
        self.assertEqual(spec.output("x").expression,
                         Binary("-", Binary("+", Sync("a"), Binary("*", Sync("b"), Literal(2, "Int64"))),
                                Literal(1, "Int64")))
        self.assertEqual(spec.output("y").expression,
                         Binary("||", Binary("<", Sync("a"), Sync("b")),
                                Binary("&&", Unary("not", Binary("==", Sync("a"), Literal(1, "Int64"))),
                                       Binary(">", Sync("b"), Literal(0, "Int64")))))
    def test_negativeLiterals(self):
        spec = streamopt.parse_spec("input a: Float64\noutput x := -1.5 * a\noutput y := -a\noutput z := -inf\n")
        self.assertEqual(spec.output("x").expression, Binary("*", Literal(-1.5, "Float64"), Sync("a")))
        self.assertEqual(spec.output("y").expression, Unary("neg", Sync("a")))
        self.assertEqual(spec.output("z").expression, Literal(float("-inf"), "Float64"))
    def test_tuples(self):
        spec = streamopt.parse_spec("input p: (Float64, (Int64, Bool))\n"
                                    "output x := p.1.0\n"
                                    "output y @{p} := (1, 2.5).1\n")
        self.assertEqual(spec.output("x").expression, TupleProj(TupleProj(Sync("p"), 1), 0))
        self.assertEqual(spec.output("y").expression,
                         TupleProj(Literal((1, 2.5), ("Int64", "Float64")), 1))
    def test_ite(self):
        spec = streamopt.parse_spec("input a: Bool\noutput x := if a then 1 else if !a then 2 else 3\n")
        self.assertEqual(spec.output("x").expression,
                         Ite(Sync("a"), Literal(1, "Int64"),
                             Ite(Unary("not", Sync("a")), Literal(2, "Int64"), Literal(3, "Int64"))))
    def test_filterAndMessage(self):
        spec = streamopt.parse_spec('input a: Int64\n'
                                    'output x { filter a > 0 } := a\n'
                                    'trigger @{a} { filter a < 0 } a == -1 "say \\"hi\\"\\n"\n')
        self.assertEqual(spec.output("x").filter, Binary(">", Sync("a"), Literal(0, "Int64")))
        self.assertEqual(spec.triggers[0].message, 'say "hi"\n')
        self.assertEqual(spec.triggers[0].filter, Binary("<", Sync("a"), Literal(0, "Int64")))
    def test_comments(self):
        spec = streamopt.parse_spec("# header\ninput a: Int64 # trailing\n\n# between\noutput x := a\n")
        self.assertEqual(spec.names(), ["a", "x"])


class TestParserErrors(unittest.TestCase):
    def assertSpecError(self, exc, text, position):
        with self.assertRaises(exc) as ctx:
            streamopt.parse_spec(text)
        self.assertEqual(ctx.exception.position, position)
        return ctx.exception
    def test_empty(self):
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec, "")
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec, "# only a comment\n")
    def test_unknownTarget(self):
        err = self.assertSpecError(streamopt.UnknownTargetError, "input a: Int64\noutput x := b + 1\n", (2, 13))
        self.assertEqual(str(err), "line 2, column 13: access to undeclared stream 'b'")
    def test_unknownActivationInput(self):
        self.assertSpecError(streamopt.UnknownTargetError,
                             "input a: Int64\noutput x @{a && q} := a\n", (2, 17))
    def test_duplicate(self):
        self.assertSpecError(streamopt.DuplicateNameError, "input a: Int64\noutput a := 1\n", (2, 8))
    def test_missingAnnotation(self):
        self.assertRaises(streamopt.MissingAnnotationError, streamopt.parse_spec, "input a\noutput x := a\n")
    def test_offsetRequiresDefault(self):
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec,
                          "input a: Int64\noutput x := a.offset(by: -1)\n")
    def test_positiveOffset(self):
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec,
                          "input a: Int64\noutput x := a.offset(by: 1).defaults(to: 0)\n")
    def test_windowDefaults(self):
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec,
                          "input a: Int64\noutput x @1Hz := a.aggregate(over: 1s, using: avg)\n")
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec,
                          "input a: Int64\noutput x @1Hz := a.aggregate(over: 1s, using: count).defaults(to: 0)\n")
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec,
                          "input a: Int64\noutput x @1Hz := a.aggregate(over: 0s, using: count)\n")
    def test_comparisonChain(self):
        self.assertSpecError(streamopt.SpecSyntaxError, "input a: Int64\noutput x := 1 < a < 3\n", (2, 19))
    def test_badCharacter(self):
        self.assertSpecError(streamopt.SpecSyntaxError, "input a: Int64\noutput x := a $ 1\n", (2, 15))
    def test_unknownType(self):
        self.assertSpecError(streamopt.SpecSyntaxError, "input a: Int32\n", (1, 10))
    def test_zeroFrequency(self):
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec, "input a: Int64\noutput x @0Hz := 1\n")
    def test_intRange(self):
        self.assertRaises(streamopt.SpecSyntaxError, streamopt.parse_spec,
                          "input a: Int64\noutput x := a + 9223372036854775808\n")
        spec = streamopt.parse_spec("input a: Int64\noutput x := a + -9223372036854775808\n")
        self.assertEqual(spec.output("x").expression.rhs, Literal(streamopt.INT64_MIN, "Int64"))


class TestPrettyPrinter(unittest.TestCase):
    def test_altlat(self):
        spec = streamopt.parse_spec(streamopt.ALTLAT_SPEC)
        self.assertEqual(streamopt.pretty(spec),
                         "input alt: Float64\n"
                         "input lat: Float64\n"
                         "output check_alt := alt < 3.0\n"
                         "output check_lat := lat > 1.0 && lat < 2.0\n"
                         "trigger !(check_alt && check_lat) \"bounds violated\"\n")
    def test_expressions(self):
        self.assertEqual(streamopt.pretty_expr(Unary("neg", Literal(3, "Int64"))), "-(3)")
        self.assertEqual(streamopt.pretty_expr(Binary("-", Sync("a"), Binary("-", Sync("b"), Sync("c")))),
                         "a - (b - c)")
        self.assertEqual(streamopt.pretty_expr(Binary("<", Binary("<", Sync("a"), Sync("b")), Literal(True, "Bool"))),
                         "(a < b) < true")
        self.assertEqual(streamopt.pretty_expr(Window("a", Fraction(1, 2), "count")),
                         "a.aggregate(over: 500ms, using: count)")
        self.assertEqual(streamopt.pretty_expr(Sync("a", -1, Literal(0.0, "Float64"))),
                         "a.offset(by: -1).defaults(to: 0.0)")
    def test_roundTrip(self):
        for name in streamopt.CORPUS:
            spec = streamopt.parse_spec(streamopt.bundled_spec(name))
            self.assertEqual(streamopt.parse_spec(streamopt.pretty(spec)), spec, name)
    def test_roundTripRandom(self):
        rng = random.Random(11)
        for _ in range(200):
            spec = streamopt.random_spec(rng)
            text = streamopt.pretty(spec)
            self.assertEqual(streamopt.parse_spec(text), spec, text)
            self.assertEqual(streamopt.pretty(streamopt.parse_spec(text)), text)
    def test_literalRoundTrip(self):
        for value in ["-0.0", "nan", "inf", "-inf", "0.1", "1e-07", "-3"]:
            spec = streamopt.parse_spec("input a: Float64\noutput x := a + {}\n".format(value))
            self.assertEqual(streamopt.parse_spec(streamopt.pretty(spec)), spec, value)
