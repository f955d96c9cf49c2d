#!/usr/bin/env python3
"""
Tests for command line parsing and configuration files
"""
import os
import unittest
import tempfile
import json
import streamopt

ENCODING = streamopt.ENCODING


class TestCliParser(unittest.TestCase):
    def setUp(self):
        self.spec = tempfile.NamedTemporaryFile(mode='w+b', suffix=".strm", delete=True)
        self.spec.write(bytes(streamopt.ALTLAT_SPEC, ENCODING))
        self.spec.flush()
        self.readable = tempfile.NamedTemporaryFile(mode='rb', delete=True)
    def tearDown(self):
        self.spec.close()
        self.readable.close()
    def test_emptyCli(self):
        self.assertRaises(ValueError, streamopt.read_cli, [])
    def test_unknownCommand(self):
        self.assertRaises(ValueError, streamopt.read_cli, ["compile", self.spec.name])
    def test_check(self):
        conf = streamopt.read_cli(["check", self.spec.name])
        self.assertEqual(conf["command"], "check")
        self.assertEqual(conf["spec"], self.spec.name)
        self.assertEqual(conf["materialize"], False)
        self.assertEqual(conf["configfile"], None)
        self.assertEqual(conf["loglevel"], None)
    def test_checkMaterialize(self):
        conf = streamopt.read_cli(["check", "--materialize", self.spec.name])
        self.assertEqual(conf["materialize"], True)
    def test_specNotExist(self):
        fname = os.path.join(tempfile.gettempdir(), "streamopt-missing.strm")
        self.assertRaises(ValueError, streamopt.read_cli, ["check", fname])
    def test_optimizeDefaults(self):
        conf = streamopt.read_cli(["optimize", self.spec.name])
        self.assertEqual(conf["passes"], None)
        self.assertEqual(conf["max_rounds"], None)
        self.assertEqual(conf["emit"], "both")
        self.assertEqual(conf["json"], False)
        self.assertEqual(conf["output"], None)
    def test_optimizeOptions(self):
        conf = streamopt.read_cli(["optimize", "--passes", "sccp,dse", "--max-rounds", "2",
                                   "--emit", "spec", "-o", "out.strm", self.spec.name])
        self.assertEqual(conf["passes"], "sccp,dse")
        self.assertEqual(conf["max_rounds"], 2)
        self.assertEqual(conf["emit"], "spec")
        self.assertEqual(conf["output"], "out.strm")
    def test_invalidMaxRounds(self):
        self.assertRaises(ValueError, streamopt.read_cli, ["optimize", "--max-rounds", "0", self.spec.name])
    def test_invalidEmit(self):
        self.assertRaises(ValueError, streamopt.read_cli, ["optimize", "--emit", "html", self.spec.name])
    def test_runTraceNotExist(self):
        fname = os.path.join(tempfile.gettempdir(), "streamopt-missing.jsonl")
        self.assertRaises(ValueError, streamopt.read_cli, ["run", self.spec.name, fname])
    def test_runEnd(self):
        conf = streamopt.read_cli(["run", "--end", "10s", "--stats", "stats.txt", self.spec.name,
                                   self.readable.name])
        self.assertEqual(conf["end"], "10s")
        self.assertEqual(conf["stats"], "stats.txt")
        self.assertRaises(ValueError, streamopt.read_cli, ["run", "--end", "soon", self.spec.name,
                                                           self.readable.name])
    def test_genTraceAssignments(self):
        conf = streamopt.read_cli(["gen-trace", "--spec", self.spec.name, "--rate", "alt=100ms", "--rate", "lat,lon=10ms",
                                   "--range", "alt=0:5", "--bias", "lat=0.25", "--seed", "4"])
        self.assertEqual(conf["rates"], {"alt": "100ms", "lat": "10ms", "lon": "10ms"})
        self.assertEqual(conf["ranges"], {"alt": (0, 5)})
        self.assertEqual(conf["biases"], {"lat": 0.25})
        self.assertEqual(conf["seed"], 4)
    def test_genTraceInvalidAssignments(self):
        self.assertRaises(ValueError, streamopt.read_cli, ["gen-trace", "--spec", self.spec.name, "--rate", "alt"])
        self.assertRaises(ValueError, streamopt.read_cli, ["gen-trace", "--spec", self.spec.name, "--rate", "alt=fast"])
        self.assertRaises(ValueError, streamopt.read_cli, ["gen-trace", "--spec", self.spec.name, "--bias", "alt=2"])
        self.assertRaises(ValueError, streamopt.read_cli, ["gen-trace", self.spec.name])
    def test_corpus(self):
        conf = streamopt.read_cli(["corpus", "geofence2d", "--faces", "7"])
        self.assertEqual(conf["name"], "geofence2d")
        self.assertEqual(conf["faces"], 7)
        self.assertRaises(ValueError, streamopt.read_cli, ["corpus", "nothing"])
        self.assertRaises(ValueError, streamopt.read_cli, ["corpus", "geofence2d", "--faces", "2"])
    def test_configfile_long(self):
        conf = streamopt.read_cli(["--configfile", self.readable.name, "check", self.spec.name])
        self.assertEqual(conf["configfile"], self.readable.name)
    def test_configfile_not_exist(self):
        fname = os.path.join(tempfile.gettempdir(), "streamopt-missing.conf")
        self.assertRaises(ValueError, streamopt.read_cli, ["--configfile", fname, "check", self.spec.name])
    def test_loglevel(self):
        conf = streamopt.read_cli(["--log", "debug", "check", self.spec.name])
        self.assertEqual(conf["loglevel"], "debug")
        self.assertRaises(ValueError, streamopt.read_cli, ["--log", "loud", "check", self.spec.name])


class TestConfigFile(unittest.TestCase):
    def setUp(self):
        self.cfgfile = tempfile.NamedTemporaryFile(mode='w+b', delete=True)
        self.configdict = {"passes": "sccp,dse",
                           "max_rounds": 3,
                           "rates": {"alt": "50ms"},
                           "ranges": {"alt": [0, 10]},
                          }
        self.cfgfile.write(bytes(json.dumps(self.configdict), encoding=ENCODING))
        self.cfgfile.flush()

        self.invalid = tempfile.NamedTemporaryFile(mode='w+b', delete=True)
        self.invalid.write(bytes("blabla", encoding=ENCODING))
        self.invalid.flush()

        self.notobject = tempfile.NamedTemporaryFile(mode='w+b', delete=True)
        self.notobject.write(bytes("[1, 2]", encoding=ENCODING))
        self.notobject.flush()

        self.empty = tempfile.NamedTemporaryFile(mode='rb', delete=True)
    def tearDown(self):
        self.cfgfile.close()
        self.invalid.close()
        self.notobject.close()
        self.empty.close()
    def test_validConfig(self):
        cdict = streamopt.read_config({"configfile": self.cfgfile.name, "command": "optimize"})
        self.assertEqual(cdict["passes"], "sccp,dse")
        self.assertEqual(cdict["max_rounds"], 3)
        self.assertEqual(cdict["rates"], {"alt": "50ms"})
        self.assertEqual(cdict["ranges"], {"alt": (0, 10)})
        self.assertEqual(cdict["repeat"], streamopt.DEFAULT_REPEAT)
    def test_cliOverridesConfig(self):
        cdict = streamopt.read_config({"configfile": self.cfgfile.name, "passes": "cse", "max_rounds": None,
                                       "rates": {"lat": "10ms"}})
        self.assertEqual(cdict["passes"], "cse")
        self.assertEqual(cdict["max_rounds"], 3)
        self.assertEqual(cdict["rates"], {"alt": "50ms", "lat": "10ms"})
    def test_invalidConfig(self):
        self.assertRaises(ValueError, streamopt.read_config, {"configfile": self.invalid.name})
    def test_notObjectConfig(self):
        self.assertRaises(ValueError, streamopt.read_config, {"configfile": self.notobject.name})
    def test_emptyConfig(self):
        cdict = streamopt.read_config({"configfile": self.empty.name})
        self.assertEqual(cdict["passes"], streamopt.DEFAULT_PASSES)
        self.assertEqual(cdict["max_rounds"], streamopt.DEFAULT_MAX_ROUNDS)
        self.assertEqual(cdict["duration"], streamopt.DEFAULT_DURATION)
        self.assertEqual(cdict["rates"], {})
