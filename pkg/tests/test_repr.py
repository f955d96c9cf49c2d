#!/usr/bin/env python3
"""
Tests for the __repr__ of declarations, graph edges and reports
"""
import unittest
import streamopt


class TestRepr(unittest.TestCase):
    def test_edge(self):
        edge = streamopt.Edge("a", "b", "sync")
        self.assertEqual(repr(edge), "Edge(source='a', target='b', kind='sync')")
        edge = streamopt.Edge("a", "b", "sync", offset=-2)
        self.assertEqual(repr(edge), "Edge(source='a', target='b', kind='sync', offset=-2)")
    def test_report(self):
        self.assertEqual(repr(streamopt.PassReport("sccp")), "PassReport(name='sccp')")
        self.assertEqual(repr(streamopt.EquivalenceVerdict()), "EquivalenceVerdict()")
    def test_inputDecl(self):
        decl = streamopt.InputDecl("alt", "Float64")
        self.assertEqual(repr(decl), "InputDecl(name='alt', vtype='Float64')")
    def test_expression(self):
        expr = streamopt.parse_spec("input a: Int64\noutput x := a + 1\n").outputs[0].expression
        self.assertEqual(repr(expr), "Binary(a + 1)")
    def test_frequency(self):
        self.assertEqual(repr(streamopt.Frequency(1, 3)), "Frequency(1, 3)")
        self.assertEqual(str(streamopt.Frequency(1, 2)), "0.5Hz")
