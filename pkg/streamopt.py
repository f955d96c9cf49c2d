#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
This module provides a toolchain for a stream-based runtime monitoring language: a parser and
pretty printer, a two-dimensional type checker (value types and pacing types), specification
level optimizations and a trace-driven interpreter that is the semantic reference for every
optimization.

Depends on no external module.

Provided functions:
- parse_spec: parse specification text into a Spec
- pretty: print a Spec or TypedSpec as specification text
- infer_types: resolve value and pacing types of all streams, returns a TypedSpec
- build_dependency_graph, evaluation_order, memory_bounds, compute_schedule
- fold_constants, sccp, dead_stream_elim, cse, pacing_refinement, filter_refinement
- run_pipeline: apply a list of passes until nothing changes
- run: evaluate a TypedSpec over a trace of events
- freq_lcm, freq_divides: exact frequency arithmetic
- ac_implies, ac_and, ac_or: activation condition algebra
- expr_eq, expr_hash: structural identity of expressions
- generate_trace, read_trace, write_trace: trace files
- equivalence_harness: differential testing of passes
- bundled_spec, random_spec: specification corpus

Provided classes:
- Frequency
- ActivationCondition (AcInput, AcAnd, AcOr)
- PacingType (EventBased, Periodic)
- Expression (Literal, Sync, Hold, Window, Unary, Binary, Ite, TupleProj)
- Spec (InputDecl, OutputDecl, TriggerDecl)
- TypedSpec, TypedStream
- DependencyGraph, EvaluationOrder, Schedule
- Monitor, Event, Observation, EvalStats
- PassReport, BenchReport, EquivalenceVerdict
"""

# =======================================================================================
#
#      Filename:  streamopt.py
#
#      Description:  Optimizer and interpreter for stream-based monitoring specifications
#
#      Project:  StreamOpt
#
#      This program is free software: you can redistribute it and/or modify it under
#      the terms of the GNU General Public License as published by the Free Software
#      Foundation, either version 3 of the License, or (at your option) any later
#      version.
#
#      This program is distributed in the hope that it will be useful, but WITHOUT ANY
#      WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS FOR A
#      PARTICULAR PURPOSE.  See the GNU General Public License for more details.
#
#      You should have received a copy of the GNU General Public License along with
#      this program.  If not, see <http://www.gnu.org/licenses/>.
#
# =======================================================================================

################################################################################
# Imports
################################################################################
import os
import sys
import re
import json
import math
import time
import struct
import random
import hashlib
import argparse
import inspect
import logging
import operator
import itertools
import statistics
from fractions import Fraction
from functools import reduce, lru_cache
from collections import deque
from os.path import join as pjoin
from os.path import exists as pexists

################################################################################
# Configuration
################################################################################
# Pass list used when the command line and the configuration file name none.
# 'all' expands to PIPELINE_ORDER.
DEFAULT_PASSES = "all"
# The pass manager stops after this many rounds even if passes still change
# the specification.
DEFAULT_MAX_ROUNDS = 8
# Number of repetitions per variant in 'bench'. The median wall time is reported.
DEFAULT_REPEAT = 10
# Seed for trace generation
DEFAULT_SEED = 0
# Trace generator defaults: trace length, period of inputs without an explicit
# rate and the value distributions of inputs without explicit ranges/biases.
DEFAULT_DURATION = "100s"
DEFAULT_PERIOD = "100ms"
DEFAULT_FLOAT_RANGE = (-100.0, 100.0)
DEFAULT_INT_RANGE = (-100, 100)
DEFAULT_BOOL_BIAS = 0.5
# Equivalence harness: number of seeds and trace length per seed
DEFAULT_HARNESS_SEEDS = 10
DEFAULT_HARNESS_DURATION = "10s"
# Activation conditions are compared by exhaustive truth tables. Formulas over
# more inputs are rejected.
MAX_AC_INPUTS = 20

################################################################################
# Version information
################################################################################
STREAMOPT_VERSION = "0.1.0"
__version__ = STREAMOPT_VERSION

################################################################################
# Constants
################################################################################
ENCODING = "utf-8"

DEFAULT_LOGLEVEL = "warning"
CONFIG_FILENAME = ".streamopt"
SYSTEM_CONFIG_FILE = "/etc/streamopt.conf"

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

BOOL = "Bool"
INT64 = "Int64"
FLOAT64 = "Float64"
SCALAR_TYPES = (BOOL, INT64, FLOAT64)

AGGREGATIONS = ("count", "sum", "avg", "min", "max", "exists")
# Aggregations that have no value on an empty window
DEFAULTED_AGGREGATIONS = ("avg", "min", "max")

ARITHMETIC_OPS = ("+", "-", "*", "/", "%")
ORDERING_OPS = ("<", "<=", ">", ">=")
EQUALITY_OPS = ("==", "!=")
LOGICAL_OPS = ("&&", "||")
BINARY_OPS = ARITHMETIC_OPS + ORDERING_OPS + EQUALITY_OPS + LOGICAL_OPS
UNARY_OPS = ("neg", "not")

FILTER_SUFFIX = ".filter"
CSE_PREFIX = "__cse"

PIPELINE_ORDER = ("sccp", "ptr", "fr", "cse", "dse")

# Exit codes of the command line interface
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INEQUIVALENT = 2
EXIT_FAULT = 3

################################################################################
# Exceptions
################################################################################

class StreamSpecError(Exception):
    '''Base class of all errors about specifications, traces and their evaluation.
    The optional position is a (line, column) tuple into the specification text.'''
    def __init__(self, message, position=None):
        super(StreamSpecError, self).__init__(message)
        self.message = message
        self.position = position
    def __str__(self):
        if self.position is not None:
            return "line {}, column {}: {}".format(self.position[0], self.position[1], self.message)
        return self.message

class SpecSyntaxError(StreamSpecError):
    pass

class DuplicateNameError(StreamSpecError):
    pass

class UnknownTargetError(StreamSpecError):
    pass

class MissingAnnotationError(StreamSpecError):
    pass

class TypeCheckError(StreamSpecError):
    pass

class InferenceError(TypeCheckError):
    pass

class KindMixError(TypeCheckError):
    pass

class IncompatiblePacingError(TypeCheckError):
    pass

class ValueTypeError(TypeCheckError):
    pass

class CycleError(StreamSpecError):
    def __init__(self, cycle):
        super(CycleError, self).__init__("cyclic dependency: {}".format(" -> ".join(cycle)))
        self.cycle = cycle

class CapacityError(StreamSpecError):
    pass

class ArithmeticFault(StreamSpecError):
    pass

class PassError(StreamSpecError):
    pass

class FoldError(PassError):
    pass

class TraceError(StreamSpecError):
    pass

class RuntimeFault(StreamSpecError):
    '''Raised when an evaluation faults. Keeps the observations emitted before the fault.'''
    def __init__(self, stream, time, message, observations=None):
        super(RuntimeFault, self).__init__(
            "runtime fault in '{}' at time {}: {}".format(stream, format_decimal(time), message))
        self.stream = stream
        self.time = time
        self.observations = list(observations or [])

################################################################################
# Helper functions
################################################################################

def fopen(filename, mode="r"):
    '''Opens a file if it exists and is readable and returns the file pointer. Returns None
    otherwise, the reason is logged.'''
    if filename is not None and pexists(filename) and os.path.isfile(filename):
        try:
            if "b" in mode:
                filefp = open(filename, mode)
            else:
                filefp = open(filename, mode, encoding=ENCODING)
        except PermissionError:
            logging.debug("Not enough permissions to read file %s", filename)
            return None
        except Exception as e:
            logging.error("File %s open: %s", filename, e)
            return None
        return filefp
    elif filename is None:
        logging.debug("Filename is None")
    elif not pexists(filename):
        logging.debug("Target of filename (%s) does not exist", filename)
    elif not os.path.isfile(filename):
        logging.debug("Target of filename (%s) is no file", filename)
    return None

def read_text(filename):
    '''Returns the content of a text file

    :param filename: path to the file
    :raises: :class:`ValueError`: file cannot be opened

    :returns: file content
    :rtype: str
    '''
    filefp = fopen(filename)
    if filefp is None:
        raise ValueError("File '{}' cannot be read".format(filename))
    try:
        return filefp.read()
    finally:
        filefp.close()

def tofraction(value):
    r'''Returns an exact rational for a decimal string like 0.25, 1e-3 or 1/3.

    :param value: string, int, float or Fraction
    :raises: :class:`ValueError`: value is no number

    :returns: exact value
    :rtype: Fraction
    '''
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("Not a number: {}".format(value))
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str) and value.strip():
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise ValueError("Not a number: {}".format(value))

def format_decimal(value):
    '''Returns the shortest exact decimal string of a rational. Rationals without finite decimal
    expansion are written as n/d.'''
    value = tofraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return "{}/{}".format(value.numerator, value.denominator)
    digits = max(twos, fives)
    scaled = abs(value) * 10 ** digits
    text = str(scaled.numerator).rjust(digits + 1, "0")
    intpart, fracpart = text[:-digits], text[-digits:].rstrip("0")
    sign = "-" if value < 0 else ""
    return "{}{}.{}".format(sign, intpart, fracpart)

def toduration(value):
    r'''Returns a duration string (2s, 100ms, 0.5) in seconds

    :param value: duration with unit s or ms, plain numbers are seconds
    :raises: :class:`ValueError`: value is no valid duration

    :returns: duration in seconds
    :rtype: Fraction
    '''
    if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return Fraction(value)
    if isinstance(value, str):
        mat = re.match(r"^\s*([\d\.eE+\-/]+)\s*(ms|s)?\s*$", value)
        if mat:
            number = tofraction(mat.group(1))
            if mat.group(2) == "ms":
                number /= 1000
            return number
    raise ValueError("Invalid duration: {}".format(value))

def tofrequency(value):
    r'''Returns a frequency string (10Hz, 0.5Hz, 1/3Hz, 2kHz) as Frequency

    :param value: frequency with unit Hz or kHz, plain numbers are Hz
    :raises: :class:`ValueError`: value is no valid positive frequency

    :returns: exact frequency
    :rtype: Frequency
    '''
    if isinstance(value, Frequency):
        return value
    if isinstance(value, str):
        mat = re.match(r"^\s*([\d\.eE+\-/]+)\s*([kK]?[Hh]z)?\s*$", value)
        if mat:
            number = tofraction(mat.group(1))
            if mat.group(2) and mat.group(2).lower().startswith("k"):
                number *= 1000
            return Frequency.from_value(number)
    elif isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return Frequency.from_value(value)
    raise ValueError("Invalid frequency: {}".format(value))

def torange(value):
    '''Returns a range string LO:HI as tuple of numbers'''
    parts = str(value).split(":")
    if len(parts) != 2:
        raise ValueError("Invalid range '{}', expected LO:HI".format(value))
    bounds = []
    for part in parts:
        part = part.strip()
        if re.match(r"^[+\-]?\d+$", part):
            bounds.append(int(part))
        else:
            bounds.append(float(part))
    if bounds[0] > bounds[1]:
        raise ValueError("Invalid range '{}', lower bound exceeds upper bound".format(value))
    return tuple(bounds)

def _lcm(a, b):
    return a * b // math.gcd(a, b)

def _fraction_lcm(a, b):
    # least common multiple of two positive rationals in reduced form
    return Fraction(_lcm(a.numerator, b.numerator), math.gcd(a.denominator, b.denominator))


class _InitArgsRepr(object):
    '''Mixin printing objects as constructor calls with all non-default arguments'''
    def _init_args(self):
        """Get list of tuples with __init__ arguments"""
        parameters = inspect.signature(self.__init__).parameters.values()
        arglist = [
            (p.name, getattr(self, p.name))
            for p in parameters
            if p.default is not getattr(self, p.name)
        ]
        return arglist

    def __repr__(self):
        cls = str(self.__class__.__name__)
        args = ", ".join(["{}={!r}".format(k, v) for k, v in self._init_args()])
        return "{}({})".format(cls, args)

################################################################################
# IR: frequencies
################################################################################

class Frequency(object):
    '''Exact rational frequency in hertz, kept in canonical reduced form'''
    def __init__(self, numerator, denominator=1):
        value = Fraction(numerator, denominator)
        if value <= 0:
            raise ValueError("Frequency must be positive, got {}".format(value))
        self.numerator = value.numerator
        self.denominator = value.denominator

    @classmethod
    def from_value(cls, value):
        value = tofraction(value)
        return cls(value.numerator, value.denominator)

    @property
    def value(self):
        return Fraction(self.numerator, self.denominator)

    @property
    def period(self):
        """Period in seconds"""
        return Fraction(self.denominator, self.numerator)

    def __eq__(self, other):
        if not isinstance(other, Frequency):
            return NotImplemented
        return self.numerator == other.numerator and self.denominator == other.denominator
    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res
    def __hash__(self):
        return hash(("Hz", self.numerator, self.denominator))
    def __lt__(self, other):
        return self.value < other.value
    def __repr__(self):
        return "Frequency({}, {})".format(self.numerator, self.denominator)
    def __str__(self):
        return "{}Hz".format(format_decimal(self.value))


def freq_lcm(a, b):
    '''Returns the slowest frequency whose evaluation instants contain the instants of both a and b

    :param a: Frequency
    :param b: Frequency

    :returns: lcm(a.numerator, b.numerator) / gcd(a.denominator, b.denominator)
    :rtype: Frequency
    '''
    return Frequency(_lcm(a.numerator, b.numerator), math.gcd(a.denominator, b.denominator))

def freq_divides(slow, fast):
    '''Returns True if fast is an integer multiple of slow, i.e. every evaluation instant of
    slow is also an instant of fast'''
    return (fast.value / slow.value).denominator == 1

################################################################################
# IR: activation conditions
################################################################################

class ActivationCondition(object):
    '''Positive boolean formula over input stream names. Subclasses are AcInput, AcAnd and AcOr.
    Instances are immutable, equality is structural.'''
    def inputs(self):
        raise NotImplementedError
    def evaluate(self, covered):
        raise NotImplementedError
    def key(self):
        raise NotImplementedError
    def __eq__(self, other):
        if not isinstance(other, ActivationCondition):
            return NotImplemented
        return self.key() == other.key()
    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res
    def __hash__(self):
        return hash(self.key())
    def __repr__(self):
        return "{}({})".format(self.__class__.__name__, str(self))


class AcInput(ActivationCondition):
    def __init__(self, name):
        self.name = name
    def inputs(self):
        return frozenset([self.name])
    def evaluate(self, covered):
        return self.name in covered
    def key(self):
        return ("in", self.name)
    def __str__(self):
        return self.name


class AcAnd(ActivationCondition):
    def __init__(self, terms):
        self.terms = tuple(terms)
        if len(self.terms) < 2:
            raise ValueError("Conjunction needs at least two terms")
        self._key = ("and",) + tuple(t.key() for t in self.terms)
        self._inputs = frozenset().union(*[t.inputs() for t in self.terms])
    def inputs(self):
        return self._inputs
    def evaluate(self, covered):
        return all(t.evaluate(covered) for t in self.terms)
    def key(self):
        return self._key
    def __str__(self):
        parts = []
        for term in self.terms:
            if isinstance(term, AcOr):
                parts.append("({})".format(term))
            else:
                parts.append(str(term))
        return " && ".join(parts)


class AcOr(ActivationCondition):
    def __init__(self, terms):
        self.terms = tuple(terms)
        if len(self.terms) < 2:
            raise ValueError("Disjunction needs at least two terms")
        self._key = ("or",) + tuple(t.key() for t in self.terms)
        self._inputs = frozenset().union(*[t.inputs() for t in self.terms])
    def inputs(self):
        return self._inputs
    def evaluate(self, covered):
        return any(t.evaluate(covered) for t in self.terms)
    def key(self):
        return self._key
    def __str__(self):
        return " || ".join(str(t) for t in self.terms)


@lru_cache(maxsize=65536)
def ac_implies(phi, psi):
    '''Returns True if every input assignment satisfying phi also satisfies psi. Checked by
    exhaustive evaluation over all inputs mentioned in phi or psi.

    :raises: :class:`CapacityError`: more than MAX_AC_INPUTS distinct inputs are mentioned
    '''
    names = sorted(phi.inputs() | psi.inputs())
    if len(names) > MAX_AC_INPUTS:
        raise CapacityError("activation conditions mention {} inputs, at most {} are supported".format(
                            len(names), MAX_AC_INPUTS))
    for bits in itertools.product((False, True), repeat=len(names)):
        covered = frozenset(n for n, b in zip(names, bits) if b)
        if phi.evaluate(covered) and not psi.evaluate(covered):
            return False
    return True

def ac_equivalent(phi, psi):
    return ac_implies(phi, psi) and ac_implies(psi, phi)

def _ac_combine(cls, terms):
    flat = []
    for term in terms:
        if isinstance(term, cls):
            flat.extend(term.terms)
        else:
            flat.append(term)
    unique = []
    for term in flat:
        if term not in unique:
            unique.append(term)
    kept = []
    for i, term in enumerate(unique):
        redundant = False
        for j, other in enumerate(unique):
            if i == j:
                continue
            if cls is AcOr:
                # a stronger disjunct is absorbed by a weaker one
                absorbed, back = ac_implies(term, other), ac_implies(other, term)
            else:
                # a weaker conjunct is absorbed by a stronger one
                absorbed, back = ac_implies(other, term), ac_implies(term, other)
            if absorbed and (not back or j < i):
                redundant = True
                break
        if not redundant:
            kept.append(term)
    if len(kept) == 1:
        return kept[0]
    return cls(kept)

def ac_and(phi, psi):
    '''Returns the simplified conjunction of two activation conditions'''
    return _ac_combine(AcAnd, [phi, psi])

def ac_or(phi, psi):
    '''Returns the simplified disjunction of two activation conditions'''
    return _ac_combine(AcOr, [phi, psi])

def ac_all(conditions):
    return _ac_combine(AcAnd, list(conditions))

def ac_any(conditions):
    return _ac_combine(AcOr, list(conditions))

################################################################################
# IR: pacing types
################################################################################

class PacingType(object):
    '''The pacing dimension of a stream type: EventBased or Periodic'''
    periodic = False
    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res


class EventBased(PacingType):
    periodic = False
    def __init__(self, condition):
        if not isinstance(condition, ActivationCondition):
            raise ValueError("EventBased pacing needs an activation condition")
        self.condition = condition
    def __eq__(self, other):
        if not isinstance(other, PacingType):
            return NotImplemented
        return isinstance(other, EventBased) and self.condition == other.condition
    def __hash__(self):
        return hash(("event", self.condition))
    def __repr__(self):
        return "EventBased({})".format(self.condition)
    def __str__(self):
        return "@{{{}}}".format(self.condition)


class Periodic(PacingType):
    periodic = True
    def __init__(self, frequency):
        if not isinstance(frequency, Frequency):
            raise ValueError("Periodic pacing needs a frequency")
        self.frequency = frequency
    def __eq__(self, other):
        if not isinstance(other, PacingType):
            return NotImplemented
        return isinstance(other, Periodic) and self.frequency == other.frequency
    def __hash__(self):
        return hash(("periodic", self.frequency))
    def __repr__(self):
        return "Periodic({})".format(self.frequency)
    def __str__(self):
        return "@{}".format(self.frequency)


def pacing_implies(accessor, target):
    '''Returns True if target is due whenever accessor is due (the synchronous access rule).
    Pacing types of different kinds never imply each other.'''
    if accessor.periodic != target.periodic:
        return False
    if accessor.periodic:
        return freq_divides(accessor.frequency, target.frequency)
    return ac_implies(accessor.condition, target.condition)

def pacing_equivalent(a, b):
    if a.periodic != b.periodic:
        return False
    if a.periodic:
        return a.frequency == b.frequency
    return ac_equivalent(a.condition, b.condition)

################################################################################
# IR: value types and values
################################################################################
# Value types are the strings Bool, Int64 and Float64 or tuples of value types.
# Values are Python bool, int, float and tuple objects.

def format_type(vtype):
    if isinstance(vtype, tuple):
        return "({})".format(", ".join(format_type(t) for t in vtype))
    return vtype

def is_numeric(vtype):
    return vtype in (INT64, FLOAT64)

def type_default(vtype):
    '''Returns the neutral value of a value type: false, 0, 0.0 or element-wise for tuples'''
    if isinstance(vtype, tuple):
        return tuple(type_default(t) for t in vtype)
    if vtype == BOOL:
        return False
    if vtype == INT64:
        return 0
    return 0.0

def coerce_value(value, vtype):
    '''Returns value converted to vtype (integers are accepted for Float64).

    :raises: :class:`ValueError`: value does not match vtype
    '''
    if isinstance(vtype, tuple):
        if not isinstance(value, (tuple, list)) or len(value) != len(vtype):
            raise ValueError("expected {} value, got {!r}".format(format_type(vtype), value))
        return tuple(coerce_value(v, t) for v, t in zip(value, vtype))
    if vtype == BOOL:
        if isinstance(value, bool):
            return value
    elif vtype == INT64:
        if isinstance(value, int) and not isinstance(value, bool):
            if INT64_MIN <= value <= INT64_MAX:
                return value
    elif vtype == FLOAT64:
        if isinstance(value, float):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            return float(value)
    raise ValueError("expected {} value, got {!r}".format(format_type(vtype), value))

def _value_key(value):
    # floats compare bit-for-bit so that 0.0 and -0.0 differ and NaN equals itself
    if isinstance(value, bool):
        return ("b", value)
    if isinstance(value, int):
        return ("i", value)
    if isinstance(value, float):
        return ("f", struct.pack(">d", value))
    return ("t",) + tuple(_value_key(v) for v in value)

def _format_float(value):
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)

def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    return "({})".format(", ".join(format_value(v) for v in value))

def values_equal(lhs, rhs):
    '''IEEE-754 equality, element-wise for tuples'''
    if isinstance(lhs, tuple):
        return all(values_equal(a, b) for a, b in zip(lhs, rhs))
    return lhs == rhs

################################################################################
# IR: value operations. Shared by constant folding and the interpreter.
################################################################################

def _check_int(value):
    if value < INT64_MIN or value > INT64_MAX:
        raise ArithmeticFault("Int64 overflow")
    return value

def _int_div(lhs, rhs):
    if rhs == 0:
        raise ArithmeticFault("Int64 division by zero")
    quotient = abs(lhs) // abs(rhs)
    if (lhs < 0) != (rhs < 0):
        quotient = -quotient
    return _check_int(quotient)

def _int_mod(lhs, rhs):
    if rhs == 0:
        raise ArithmeticFault("Int64 division by zero")
    quotient = abs(lhs) // abs(rhs)
    if (lhs < 0) != (rhs < 0):
        quotient = -quotient
    return lhs - rhs * quotient

def _float_div(lhs, rhs):
    if rhs == 0.0:
        if lhs == 0.0 or math.isnan(lhs):
            return math.nan
        return math.copysign(math.inf, lhs) * math.copysign(1.0, rhs)
    return lhs / rhs

def _float_mod(lhs, rhs):
    if rhs == 0.0 or math.isinf(lhs) or math.isnan(lhs) or math.isnan(rhs):
        return math.nan
    return math.fmod(lhs, rhs)

_INT_OPS = {
    "+": lambda a, b: _check_int(a + b),
    "-": lambda a, b: _check_int(a - b),
    "*": lambda a, b: _check_int(a * b),
    "/": _int_div,
    "%": _int_mod,
}

_FLOAT_OPS = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": _float_div,
    "%": _float_mod,
}

_COMPARE_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": values_equal,
    "!=": lambda a, b: not values_equal(a, b),
}

def binary_function(op, operand_type):
    '''Returns the Python function implementing a non-logical binary operator for the given
    operand type'''
    if op in _COMPARE_OPS:
        return _COMPARE_OPS[op]
    if operand_type == INT64:
        return _INT_OPS[op]
    return _FLOAT_OPS[op]

def apply_unary(op, value, operand_type):
    if op == "not":
        return not value
    if operand_type == INT64:
        return _check_int(-value)
    return -value

def apply_binary(op, lhs, rhs, operand_type):
    '''Evaluates a binary operator on two values.

    :raises: :class:`ArithmeticFault`: Int64 overflow or division by zero
    '''
    if op == "&&":
        return lhs and rhs
    if op == "||":
        return lhs or rhs
    return binary_function(op, operand_type)(lhs, rhs)

################################################################################
# IR: expressions
################################################################################

class Expression(object):
    '''Base class of the immutable expression tree. Equality is structural (expr_eq) and the
    hash is the 64-bit structural digest (expr_hash).'''
    def children(self):
        return ()
    def with_children(self, children):
        return self
    def _fields(self):
        return ()
    def key(self):
        key = self.__dict__.get("_key")
        if key is None:
            key = (self.__class__.__name__,) + self._fields() + tuple(c.key() for c in self.children())
            self.__dict__["_key"] = key
        return key
    def digest(self):
        digest = self.__dict__.get("_digest")
        if digest is None:
            hasher = hashlib.blake2b(digest_size=8)
            hasher.update(repr((self.__class__.__name__,) + self._fields()).encode(ENCODING))
            for child in self.children():
                hasher.update(child.digest().to_bytes(8, "big"))
            digest = int.from_bytes(hasher.digest(), "big")
            self.__dict__["_digest"] = digest
        return digest
    def __eq__(self, other):
        if not isinstance(other, Expression):
            return NotImplemented
        return expr_eq(self, other)
    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res
    def __hash__(self):
        return expr_hash(self)
    def __str__(self):
        return pretty_expr(self)
    def __repr__(self):
        return "{}({})".format(self.__class__.__name__, pretty_expr(self))


class Literal(Expression):
    def __init__(self, value, vtype):
        self.value = coerce_value(value, vtype)
        self.vtype = vtype
    def _fields(self):
        return (self.vtype, _value_key(self.value))


class Sync(Expression):
    '''Synchronous access; offset 0 reads the current value, offset -n the n-th previous one'''
    def __init__(self, target, offset=0, default=None):
        if offset > 0:
            raise ValueError("Synchronous offsets must not be positive")
        if (offset < 0) != (default is not None):
            raise ValueError("A default is required exactly for negative offsets")
        self.target = target
        self.offset = offset
        self.default = default
    def _fields(self):
        default = self.default.key() if self.default is not None else None
        return (self.target, self.offset, default)


class Hold(Expression):
    '''Asynchronous access to the most recent value'''
    def __init__(self, target, default):
        self.target = target
        self.default = default
    def _fields(self):
        return (self.target, self.default.key())


class Window(Expression):
    '''Sliding-window aggregation over the interval [now - duration, now]'''
    def __init__(self, target, duration, aggregation, default=None):
        duration = tofraction(duration)
        if duration <= 0:
            raise ValueError("Window duration must be positive")
        if aggregation not in AGGREGATIONS:
            raise ValueError("Unknown aggregation '{}'".format(aggregation))
        if (aggregation in DEFAULTED_AGGREGATIONS) != (default is not None):
            raise ValueError("A default is required exactly for {}".format(", ".join(DEFAULTED_AGGREGATIONS)))
        self.target = target
        self.duration = duration
        self.aggregation = aggregation
        self.default = default
    def _fields(self):
        default = self.default.key() if self.default is not None else None
        return (self.target, self.duration, self.aggregation, default)


class Unary(Expression):
    def __init__(self, op, operand):
        if op not in UNARY_OPS:
            raise ValueError("Unknown unary operator '{}'".format(op))
        self.op = op
        self.operand = operand
    def children(self):
        return (self.operand,)
    def with_children(self, children):
        return Unary(self.op, children[0])
    def _fields(self):
        return (self.op,)


class Binary(Expression):
    def __init__(self, op, lhs, rhs):
        if op not in BINARY_OPS:
            raise ValueError("Unknown binary operator '{}'".format(op))
        self.op = op
        self.lhs = lhs
        self.rhs = rhs
    def children(self):
        return (self.lhs, self.rhs)
    def with_children(self, children):
        return Binary(self.op, children[0], children[1])
    def _fields(self):
        return (self.op,)


class Ite(Expression):
    def __init__(self, condition, consequence, alternative):
        self.condition = condition
        self.consequence = consequence
        self.alternative = alternative
    def children(self):
        return (self.condition, self.consequence, self.alternative)
    def with_children(self, children):
        return Ite(children[0], children[1], children[2])


class TupleProj(Expression):
    def __init__(self, operand, index):
        if index < 0:
            raise ValueError("Tuple index must not be negative")
        self.operand = operand
        self.index = index
    def children(self):
        return (self.operand,)
    def with_children(self, children):
        return TupleProj(children[0], self.index)
    def _fields(self):
        return (self.index,)


ACCESS_TYPES = (Sync, Hold, Window)

def expr_eq(a, b):
    '''Structural equality: same variants, operators, targets, offsets and durations and
    bit-identical literals. No algebraic normalization (a + b differs from b + a).'''
    if a is b:
        return True
    return a.digest() == b.digest() and a.key() == b.key()

def expr_hash(a):
    '''64-bit structural digest; expr_eq(a, b) implies expr_hash(a) == expr_hash(b)'''
    return a.digest()

def expr_walk(expr):
    '''Yields all subexpressions in pre-order'''
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))

def expr_accesses(expr):
    return [node for node in expr_walk(expr) if isinstance(node, ACCESS_TYPES)]

def sync_targets(expr, offset_zero=False):
    out = []
    for node in expr_walk(expr):
        if isinstance(node, Sync) and (node.offset == 0 or not offset_zero):
            if node.target not in out:
                out.append(node.target)
    return out

def expr_size(expr):
    return sum(1 for _ in expr_walk(expr))

def expr_transform(expr, function):
    '''Rebuilds expr top-down: function returns a replacement node or None to descend'''
    replacement = function(expr)
    if replacement is not None:
        return replacement
    children = expr.children()
    if not children:
        return expr
    new_children = [expr_transform(c, function) for c in children]
    if all(n is o for n, o in zip(new_children, children)):
        return expr
    return expr.with_children(new_children)

def negate(expr):
    '''Returns the boolean negation, removing a double negation'''
    if isinstance(expr, Unary) and expr.op == "not":
        return expr.operand
    return Unary("not", expr)

def conjoin(lhs, rhs):
    if lhs is None:
        return rhs
    return Binary("&&", lhs, rhs)

def disjoin(terms):
    unique = []
    for term in terms:
        if term not in unique:
            unique.append(term)
    return reduce(lambda a, b: Binary("||", a, b), unique)

def default_literal(vtype):
    return Literal(type_default(vtype), vtype)

################################################################################
# Specification declarations
################################################################################

class InputDecl(_InitArgsRepr):
    def __init__(self, name, vtype, position=None):
        self.name = name
        self.vtype = vtype
        self.position = position
    def key(self):
        return ("input", self.name, self.vtype)


class OutputDecl(_InitArgsRepr):
    '''Output stream declaration. vtype and pacing are None when not annotated.'''
    def __init__(self, name, expression, vtype=None, pacing=None, filter=None, position=None):
        self.name = name
        self.expression = expression
        self.vtype = vtype
        self.pacing = pacing
        self.filter = filter
        self.position = position
    def key(self):
        return ("output", self.name, self.vtype, self.pacing, self.filter, self.expression)


class TriggerDecl(_InitArgsRepr):
    def __init__(self, condition, message=None, pacing=None, filter=None, position=None):
        self.condition = condition
        self.message = message
        self.pacing = pacing
        self.filter = filter
        self.position = position
    def key(self):
        return ("trigger", self.message, self.pacing, self.filter, self.condition)


class Spec(_InitArgsRepr):
    '''Untyped specification: input, output and trigger declarations in declaration order.
    Equality ignores source positions.'''
    def __init__(self, inputs, outputs, triggers):
        self.inputs = list(inputs)
        self.outputs = list(outputs)
        self.triggers = list(triggers)
    def names(self):
        return [i.name for i in self.inputs] + [o.name for o in self.outputs]
    def output(self, name):
        for decl in self.outputs:
            if decl.name == name:
                return decl
        return None
    def key(self):
        return tuple(d.key() for d in self.inputs + self.outputs + self.triggers)
    def __eq__(self, other):
        if not isinstance(other, Spec):
            return NotImplemented
        return self.key() == other.key()
    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res
    def __hash__(self):
        return hash(self.key())
    def __str__(self):
        return pretty(self)

################################################################################
# Parser
################################################################################

KEYWORDS = ("input", "output", "trigger", "if", "then", "else", "filter", "true", "false",
            "inf", "nan")

_TOKEN_PATTERNS = [
    ("ws", r"[ \t\r]+"),
    ("nl", r"\n"),
    ("comment", r"#[^\n]*"),
    ("string", r'"(?:[^"\\\n]|\\.)*"'),
    ("float", r"\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+"),
    ("int", r"\d+"),
    ("name", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("op", r":=|&&|\|\||==|!=|<=|>=|[-+*/%<>!@{}()\[\],:.]"),
]
_TOKEN_REGEX = re.compile("|".join("(?P<{}>{})".format(k, p) for k, p in _TOKEN_PATTERNS))
_INT_REGEX = re.compile(r"\d+")
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


class Token(object):
    __slots__ = ("kind", "value", "line", "column")
    def __init__(self, kind, value, line, column):
        self.kind = kind
        self.value = value
        self.line = line
        self.column = column
    @property
    def position(self):
        return (self.line, self.column)
    def __repr__(self):
        return "Token({}, {!r}, {}, {})".format(self.kind, self.value, self.line, self.column)


def _unescape(text, position):
    out = []
    chars = iter(text)
    for char in chars:
        if char == "\\":
            char = next(chars)
            if char not in _ESCAPES:
                raise SpecSyntaxError("invalid escape sequence '\\{}'".format(char), position)
            out.append(_ESCAPES[char])
        else:
            out.append(char)
    return "".join(out)

def tokenize(text):
    '''Splits specification text into tokens with 1-based line and column numbers. An integer
    directly after a dot is never read as part of a float so that x.0.1 projects twice.'''
    tokens = []
    pos = 0
    line, linestart = 1, 0
    while pos < len(text):
        column = pos - linestart + 1
        mat = None
        if tokens and tokens[-1].kind == "op" and tokens[-1].value == ".":
            mat = _INT_REGEX.match(text, pos)
            if mat:
                tokens.append(Token("int", mat.group(0), line, column))
                pos = mat.end()
                continue
        mat = _TOKEN_REGEX.match(text, pos)
        if not mat:
            raise SpecSyntaxError("unexpected character '{}'".format(text[pos]), (line, column))
        kind, value = mat.lastgroup, mat.group(0)
        pos = mat.end()
        if kind == "nl":
            line += 1
            linestart = pos
            continue
        if kind in ("ws", "comment"):
            continue
        if kind == "string":
            value = _unescape(value[1:-1], (line, column))
        elif kind == "name" and value in KEYWORDS:
            kind = "keyword"
        tokens.append(Token(kind, value, line, column))
    tokens.append(Token("eof", "", line, pos - linestart + 1))
    return tokens


class SpecParser(object):
    '''Recursive-descent parser for specification text. Use parse_spec() instead of using this
    class directly.'''
    def __init__(self, text):
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0
        # (target, position) of every stream access and activation condition leaf
        self._accesses = []
        self._ac_leaves = []

    def peek(self, offset=0):
        index = min(self.index + offset, len(self.tokens) - 1)
        return self.tokens[index]

    def advance(self):
        token = self.tokens[self.index]
        if token.kind != "eof":
            self.index += 1
        return token

    def check(self, kind, value=None, offset=0):
        token = self.peek(offset)
        return token.kind == kind and (value is None or token.value == value)

    def accept(self, kind, value=None):
        if self.check(kind, value):
            return self.advance()
        return None

    def error(self, message, token=None):
        token = token or self.peek()
        raise SpecSyntaxError(message, token.position)

    def expect(self, kind, value=None):
        if self.check(kind, value):
            return self.advance()
        token = self.peek()
        found = "end of input" if token.kind == "eof" else "'{}'".format(token.value)
        self.error("expected '{}', found {}".format(value if value is not None else kind, found), token)

    def expect_name(self, what):
        token = self.peek()
        if token.kind != "name":
            found = "end of input" if token.kind == "eof" else "'{}'".format(token.value)
            self.error("expected {}, found {}".format(what, found), token)
        return self.advance()

    # declarations

    def parse(self):
        inputs, outputs, triggers = [], [], []
        if self.check("eof"):
            self.error("empty specification")
        while not self.check("eof"):
            token = self.peek()
            if self.check("keyword", "input"):
                inputs.extend(self.parse_input())
            elif self.check("keyword", "output"):
                outputs.append(self.parse_output())
            elif self.check("keyword", "trigger"):
                triggers.append(self.parse_trigger())
            else:
                self.error("expected 'input', 'output' or 'trigger', found '{}'".format(token.value), token)
        spec = Spec(inputs, outputs, triggers)
        self.validate(spec)
        return spec

    def parse_input(self):
        self.expect("keyword", "input")
        names = [self.expect_name("input name")]
        while self.accept("op", ","):
            names.append(self.expect_name("input name"))
        if not self.check("op", ":"):
            raise MissingAnnotationError("input '{}' requires a value type annotation".format(names[-1].value),
                                         self.peek().position)
        self.advance()
        vtype = self.parse_type()
        return [InputDecl(n.value, vtype, n.position) for n in names]

    def parse_output(self):
        self.expect("keyword", "output")
        name = self.expect_name("output name")
        vtype = pacing = filt = None
        if self.accept("op", ":"):
            vtype = self.parse_type()
        if self.check("op", "@"):
            pacing = self.parse_pacing()
        if self.check("op", "{"):
            filt = self.parse_filter()
        self.expect("op", ":=")
        expression = self.parse_expr()
        return OutputDecl(name.value, expression, vtype, pacing, filt, name.position)

    def parse_trigger(self):
        token = self.expect("keyword", "trigger")
        pacing = filt = message = None
        if self.check("op", "@"):
            pacing = self.parse_pacing()
        if self.check("op", "{"):
            filt = self.parse_filter()
        condition = self.parse_expr()
        if self.check("string"):
            message = self.advance().value
        return TriggerDecl(condition, message, pacing, filt, token.position)

    def parse_type(self):
        token = self.peek()
        if self.accept("op", "("):
            elements = [self.parse_type()]
            while self.accept("op", ","):
                elements.append(self.parse_type())
            self.expect("op", ")")
            if len(elements) < 2:
                self.error("tuple types need at least two elements", token)
            return tuple(elements)
        if token.kind == "name" and token.value in SCALAR_TYPES:
            self.advance()
            return token.value
        self.error("unknown value type '{}'".format(token.value), token)

    def parse_pacing(self):
        self.expect("op", "@")
        if self.accept("op", "{"):
            condition = self.parse_ac_or()
            self.expect("op", "}")
            return EventBased(condition)
        token = self.peek()
        if token.kind not in ("int", "float"):
            self.error("expected frequency or activation condition after '@'", token)
        value = tofraction(self.advance().value)
        if self.accept("op", "/"):
            denominator = self.expect("int")
            value /= int(denominator.value)
        unit = self.expect_name("frequency unit")
        if unit.value not in ("Hz", "kHz"):
            self.error("unknown frequency unit '{}'".format(unit.value), unit)
        if unit.value == "kHz":
            value *= 1000
        if value <= 0:
            self.error("frequency must be positive", token)
        return Periodic(Frequency.from_value(value))

    def parse_ac_or(self):
        terms = [self.parse_ac_and()]
        while self.accept("op", "||"):
            terms.append(self.parse_ac_and())
        return terms[0] if len(terms) == 1 else AcOr(terms)

    def parse_ac_and(self):
        terms = [self.parse_ac_atom()]
        while self.accept("op", "&&"):
            terms.append(self.parse_ac_atom())
        return terms[0] if len(terms) == 1 else AcAnd(terms)

    def parse_ac_atom(self):
        if self.accept("op", "("):
            condition = self.parse_ac_or()
            self.expect("op", ")")
            return condition
        name = self.expect_name("input name")
        self._ac_leaves.append((name.value, name.position))
        return AcInput(name.value)

    def parse_filter(self):
        self.expect("op", "{")
        self.expect("keyword", "filter")
        condition = self.parse_expr()
        self.expect("op", "}")
        return condition

    # expressions, lowest precedence first

    def parse_expr(self):
        if self.check("keyword", "if"):
            return self.parse_ite()
        return self.parse_or()

    def parse_ite(self):
        self.expect("keyword", "if")
        condition = self.parse_expr()
        self.expect("keyword", "then")
        consequence = self.parse_expr()
        self.expect("keyword", "else")
        alternative = self.parse_expr()
        return Ite(condition, consequence, alternative)

    def parse_or(self):
        lhs = self.parse_and()
        while self.accept("op", "||"):
            lhs = Binary("||", lhs, self.parse_and())
        return lhs

    def parse_and(self):
        lhs = self.parse_cmp()
        while self.accept("op", "&&"):
            lhs = Binary("&&", lhs, self.parse_cmp())
        return lhs

    def parse_cmp(self):
        lhs = self.parse_add()
        token = self.peek()
        if token.kind == "op" and token.value in ORDERING_OPS + EQUALITY_OPS:
            self.advance()
            lhs = Binary(token.value, lhs, self.parse_add())
            following = self.peek()
            if following.kind == "op" and following.value in ORDERING_OPS + EQUALITY_OPS:
                self.error("comparison operators are non-associative, use parentheses", following)
        return lhs

    def parse_add(self):
        lhs = self.parse_mul()
        while self.peek().kind == "op" and self.peek().value in ("+", "-"):
            op = self.advance().value
            lhs = Binary(op, lhs, self.parse_mul())
        return lhs

    def parse_mul(self):
        lhs = self.parse_unary()
        while self.peek().kind == "op" and self.peek().value in ("*", "/", "%"):
            op = self.advance().value
            lhs = Binary(op, lhs, self.parse_unary())
        return lhs

    def parse_unary(self):
        if self.accept("op", "!"):
            return Unary("not", self.parse_unary())
        if self.check("op", "-"):
            if self.peek(1).kind in ("int", "float") or self.check("keyword", "inf", 1) \
                    or self.check("keyword", "nan", 1):
                self.advance()
                return self.parse_postfix(self.parse_number(negative=True))
            self.advance()
            return Unary("neg", self.parse_unary())
        return self.parse_postfix(self.parse_primary())

    def parse_postfix(self, expr):
        while self.check("op", ".") and self.check("int", offset=1):
            self.advance()
            expr = TupleProj(expr, int(self.advance().value))
        return expr

    def parse_number(self, negative=False):
        token = self.advance()
        sign = -1 if negative else 1
        if token.kind == "int":
            value = sign * int(token.value)
            if value < INT64_MIN or value > INT64_MAX:
                self.error("integer literal out of Int64 range", token)
            return Literal(value, INT64)
        if token.kind == "float":
            return Literal(sign * float(token.value), FLOAT64)
        if token.kind == "keyword" and token.value in ("inf", "nan"):
            return Literal(sign * float(token.value), FLOAT64)
        self.error("expected number", token)

    def parse_primary(self):
        token = self.peek()
        if token.kind in ("int", "float") or (token.kind == "keyword" and token.value in ("inf", "nan")):
            return self.parse_number()
        if token.kind == "keyword" and token.value in ("true", "false"):
            self.advance()
            return Literal(token.value == "true", BOOL)
        if token.kind == "keyword" and token.value == "if":
            return self.parse_ite()
        if self.accept("op", "("):
            expr = self.parse_expr()
            if self.check("op", ","):
                elements = [expr]
                while self.accept("op", ","):
                    elements.append(self.parse_expr())
                self.expect("op", ")")
                if not all(isinstance(e, Literal) for e in elements):
                    self.error("tuple construction supports literals only", token)
                return Literal(tuple(e.value for e in elements), tuple(e.vtype for e in elements))
            self.expect("op", ")")
            return expr
        if token.kind == "name":
            return self.parse_access()
        found = "end of input" if token.kind == "eof" else "'{}'".format(token.value)
        self.error("expected expression, found {}".format(found), token)

    def parse_literal(self):
        '''Literal used as a default: number, boolean or tuple of literals'''
        token = self.peek()
        expr = self.parse_unary()
        if not isinstance(expr, Literal):
            self.error("expected literal", token)
        return expr

    def _method(self, name):
        # '.name(' following an access
        return self.check("op", ".") and self.check("name", name, 1) and self.check("op", "(", 2)

    def _argument(self, label):
        self.expect_name("'{}'".format(label))
        if self.tokens[self.index - 1].value != label:
            self.error("expected argument '{}'".format(label), self.tokens[self.index - 1])
        self.expect("op", ":")

    def _defaults(self):
        self.advance()
        self.advance()
        self.expect("op", "(")
        self._argument("to")
        default = self.parse_literal()
        self.expect("op", ")")
        return default

    def parse_access(self):
        name = self.advance()
        self._accesses.append((name.value, name.position))
        if self._method("offset"):
            self.advance()
            self.advance()
            self.expect("op", "(")
            self._argument("by")
            sign = -1 if self.accept("op", "-") else 1
            amount = self.expect("int")
            self.expect("op", ")")
            offset = sign * int(amount.value)
            if offset > 0:
                self.error("positive offsets (future accesses) are not supported", amount)
            if offset == 0:
                if self._method("defaults"):
                    self.error("offset 0 takes no default")
                return Sync(name.value)
            if not self._method("defaults"):
                self.error("negative offset of '{}' requires .defaults(to: ...)".format(name.value))
            return Sync(name.value, offset, self._defaults())
        if self._method("hold"):
            self.advance()
            self.advance()
            self.expect("op", "(")
            self._argument("or")
            default = self.parse_literal()
            self.expect("op", ")")
            return Hold(name.value, default)
        if self._method("aggregate"):
            self.advance()
            self.advance()
            self.expect("op", "(")
            self._argument("over")
            duration_token = self.peek()
            if duration_token.kind not in ("int", "float"):
                self.error("expected window duration", duration_token)
            duration = tofraction(self.advance().value)
            unit = self.expect_name("duration unit")
            if unit.value == "ms":
                duration /= 1000
            elif unit.value != "s":
                self.error("unknown duration unit '{}'".format(unit.value), unit)
            if duration <= 0:
                self.error("window duration must be positive", duration_token)
            self.expect("op", ",")
            self._argument("using")
            aggregation = self.expect_name("aggregation")
            if aggregation.value not in AGGREGATIONS:
                self.error("unknown aggregation '{}'".format(aggregation.value), aggregation)
            self.expect("op", ")")
            default = None
            if aggregation.value in DEFAULTED_AGGREGATIONS:
                if not self._method("defaults"):
                    self.error("aggregation '{}' requires .defaults(to: ...)".format(aggregation.value))
                default = self._defaults()
            elif self._method("defaults"):
                self.error("aggregation '{}' takes no default".format(aggregation.value))
            return Window(name.value, duration, aggregation.value, default)
        return Sync(name.value)

    def validate(self, spec):
        '''Checks name uniqueness and that every access names a declared stream'''
        seen = {}
        for decl in spec.inputs + spec.outputs:
            if decl.name in seen:
                raise DuplicateNameError("stream '{}' is declared twice".format(decl.name), decl.position)
            seen[decl.name] = decl
        for target, position in self._accesses:
            if target not in seen:
                raise UnknownTargetError("access to undeclared stream '{}'".format(target), position)
        inputs = set(i.name for i in spec.inputs)
        for target, position in self._ac_leaves:
            if target not in inputs:
                raise UnknownTargetError(
                    "activation condition names '{}' which is no input stream".format(target), position)


def parse_spec(text):
    '''Parses specification text.

    :param text: specification source
    :raises: :class:`SpecSyntaxError`, :class:`DuplicateNameError`,
             :class:`UnknownTargetError`, :class:`MissingAnnotationError`

    :returns: the parsed specification
    :rtype: Spec
    '''
    spec = SpecParser(text).parse()
    logging.debug("Parsed %d inputs, %d outputs, %d triggers",
                  len(spec.inputs), len(spec.outputs), len(spec.triggers))
    return spec

################################################################################
# Pretty printer
################################################################################

_PRECEDENCE = {"||": 1, "&&": 2, "<": 3, "<=": 3, ">": 3, ">=": 3, "==": 3, "!=": 3,
               "+": 4, "-": 4, "*": 5, "/": 5, "%": 5}
_UNARY_PRECEDENCE = 6
_POSTFIX_PRECEDENCE = 7

def _format_duration(duration):
    if duration.denominator == 1:
        return "{}s".format(duration.numerator)
    millis = duration * 1000
    if millis.denominator == 1:
        return "{}ms".format(millis.numerator)
    return "{}s".format(format_decimal(duration))

def _pretty_expr(expr, context):
    if isinstance(expr, Literal):
        text = format_value(expr.value)
        if context >= _POSTFIX_PRECEDENCE and text.startswith("-"):
            return "({})".format(text)
        return text
    if isinstance(expr, Sync):
        if expr.offset == 0:
            return expr.target
        return "{}.offset(by: {}).defaults(to: {})".format(expr.target, expr.offset,
                                                           format_value(expr.default.value))
    if isinstance(expr, Hold):
        return "{}.hold(or: {})".format(expr.target, format_value(expr.default.value))
    if isinstance(expr, Window):
        text = "{}.aggregate(over: {}, using: {})".format(expr.target, _format_duration(expr.duration),
                                                          expr.aggregation)
        if expr.default is not None:
            text += ".defaults(to: {})".format(format_value(expr.default.value))
        return text
    if isinstance(expr, Unary):
        if expr.op == "not":
            text = "!" + _pretty_expr(expr.operand, _UNARY_PRECEDENCE)
        elif isinstance(expr.operand, Literal) and expr.operand.vtype in (INT64, FLOAT64):
            # keeps the negation apart from a literal on reparse
            text = "-({})".format(format_value(expr.operand.value))
        else:
            operand = _pretty_expr(expr.operand, _UNARY_PRECEDENCE)
            if operand.startswith("-"):
                operand = "({})".format(operand)
            text = "-" + operand
        return "({})".format(text) if context > _UNARY_PRECEDENCE else text
    if isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        left_context = prec + 1 if prec == 3 else prec
        text = "{} {} {}".format(_pretty_expr(expr.lhs, left_context), expr.op,
                                 _pretty_expr(expr.rhs, prec + 1))
        return "({})".format(text) if context > prec else text
    if isinstance(expr, Ite):
        text = "if {} then {} else {}".format(_pretty_expr(expr.condition, 1),
                                              _pretty_expr(expr.consequence, 1),
                                              _pretty_expr(expr.alternative, 0))
        return "({})".format(text) if context > 0 else text
    if isinstance(expr, TupleProj):
        return "{}.{}".format(_pretty_expr(expr.operand, _POSTFIX_PRECEDENCE), expr.index)
    raise ValueError("Unknown expression {!r}".format(expr))

def pretty_expr(expr):
    return _pretty_expr(expr, 0)

def _format_message(message):
    return '"{}"'.format(message.replace("\\", "\\\\").replace('"', '\\"')
                         .replace("\n", "\\n").replace("\t", "\\t"))

def pretty_decl(decl):
    if isinstance(decl, InputDecl):
        return "input {}: {}".format(decl.name, format_type(decl.vtype))
    parts = []
    if isinstance(decl, OutputDecl):
        head = "output {}".format(decl.name)
        if decl.vtype is not None:
            head += ": {}".format(format_type(decl.vtype))
        parts.append(head)
    else:
        parts.append("trigger")
    if decl.pacing is not None:
        parts.append(str(decl.pacing))
    if decl.filter is not None:
        parts.append("{{ filter {} }}".format(pretty_expr(decl.filter)))
    if isinstance(decl, OutputDecl):
        parts.append(":= {}".format(pretty_expr(decl.expression)))
    else:
        parts.append(pretty_expr(decl.condition))
        if decl.message is not None:
            parts.append(_format_message(decl.message))
    return " ".join(parts)

def pretty(spec):
    '''Returns the specification as text, one declaration per line. Parsing the result yields a
    specification equal to the input.'''
    if isinstance(spec, TypedSpec):
        spec = spec.to_spec()
    lines = [pretty_decl(d) for d in spec.inputs + spec.outputs + spec.triggers]
    return "\n".join(lines) + "\n"

################################################################################
# Analysis: type inference
################################################################################

class TypedStream(_InitArgsRepr):
    '''A stream with resolved value type and pacing type. kind is input, output or trigger,
    provenance tells whether the pacing was annotated or inferred.'''
    def __init__(self, name, kind, vtype, pacing, provenance="inferred", expression=None,
                 filter=None, message=None, annotated_vtype=None, index=None, position=None):
        self.name = name
        self.kind = kind
        self.vtype = vtype
        self.pacing = pacing
        self.provenance = provenance
        self.expression = expression
        self.filter = filter
        self.message = message
        self.annotated_vtype = annotated_vtype
        self.index = index
        self.position = position

    def parts(self):
        '''Expressions evaluated for this stream, filter first'''
        out = []
        if self.filter is not None:
            out.append(self.filter)
        if self.expression is not None:
            out.append(self.expression)
        return out

    def to_decl(self, materialize=False):
        pacing = self.pacing if (materialize or self.provenance == "annotated") else None
        if self.kind == "input":
            return InputDecl(self.name, self.vtype, self.position)
        if self.kind == "output":
            return OutputDecl(self.name, self.expression, self.annotated_vtype, pacing, self.filter,
                              self.position)
        return TriggerDecl(self.expression, self.message, pacing, self.filter, self.position)


class TypedSpec(object):
    '''Specification where every stream carries its value type and pacing type'''
    def __init__(self, inputs, outputs, triggers):
        self.inputs = list(inputs)
        self.outputs = list(outputs)
        self.triggers = list(triggers)
        self._streams = dict((s.name, s) for s in self.streams())

    def streams(self):
        return self.inputs + self.outputs + self.triggers

    def get(self, name):
        return self._streams[name]

    def __contains__(self, name):
        return name in self._streams

    def pacing(self, name):
        return self._streams[name].pacing

    def vtype(self, name):
        return self._streams[name].vtype

    def to_spec(self, materialize=None):
        '''Returns the untyped specification. Inferred pacings are kept implicit unless the
        stream is named in materialize (True materializes every stream).'''
        def selected(stream):
            if materialize is True:
                return True
            return bool(materialize) and stream.name in materialize
        return Spec([s.to_decl() for s in self.inputs],
                    [s.to_decl(selected(s)) for s in self.outputs],
                    [s.to_decl(selected(s)) for s in self.triggers])

    def __eq__(self, other):
        if not isinstance(other, TypedSpec):
            return NotImplemented
        return self.to_spec() == other.to_spec() and \
            [(s.vtype, s.pacing) for s in self.streams()] == [(s.vtype, s.pacing) for s in other.streams()]

    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res

    __hash__ = None

    def __str__(self):
        return pretty(self)

    def __repr__(self):
        return "TypedSpec({} inputs, {} outputs, {} triggers)".format(
            len(self.inputs), len(self.outputs), len(self.triggers))


def _trigger_name(index):
    return "trigger[{}]".format(index)


class _ValueTyper(object):
    '''Resolves value types. Unannotated outputs are typed on demand, a recursive access to a
    stream under resolution takes the type of its default.'''
    def __init__(self, spec):
        self.spec = spec
        self.decls = dict((o.name, o) for o in spec.outputs)
        self.types = dict((i.name, i.vtype) for i in spec.inputs)
        for decl in spec.outputs:
            if decl.vtype is not None:
                self.types[decl.name] = decl.vtype
        self.typed = {}
        self._active = []
        self._position = None

    def error(self, message):
        raise ValueTypeError(message, self._position)

    def stream_type(self, name):
        if name in self.types:
            return self.types[name]
        if name in self._active:
            return None
        self.type_output(self.decls[name])
        return self.types[name]

    def type_output(self, decl):
        if decl.name in self.typed:
            return
        self._active.append(decl.name)
        saved = self._position
        self._position = decl.position
        expression, vtype = self.check(decl.expression)
        if decl.vtype is not None:
            expression = self.coerce(expression, vtype, decl.vtype,
                                     "output '{}' is annotated {} but its expression has type {}".format(
                                         decl.name, format_type(decl.vtype), format_type(vtype)))
            vtype = decl.vtype
        self.types[decl.name] = vtype
        filt = self.check_condition(decl.filter, "filter of '{}'".format(decl.name))
        self.typed[decl.name] = (expression, filt, vtype)
        self._position = saved
        self._active.pop()

    def check_condition(self, expr, what):
        if expr is None:
            return None
        expr, vtype = self.check(expr)
        if vtype != BOOL:
            self.error("{} must be Bool, found {}".format(what, format_type(vtype)))
        return expr

    def coerce(self, expr, have, want, message):
        if have == want:
            return expr
        if isinstance(expr, Literal):
            try:
                return Literal(coerce_value(expr.value, want), want)
            except ValueError:
                pass
        self.error(message)

    def _access_type(self, expr):
        vtype = self.stream_type(expr.target)
        if vtype is None:
            if expr.default is None:
                self.error("cannot infer the value type of recursive stream '{}', annotate it".format(
                    expr.target))
            vtype = expr.default.vtype
        return vtype

    def _default(self, default, vtype):
        if default is None:
            return None
        return self.coerce(default, default.vtype, vtype, "default {} does not match type {}".format(
            format_value(default.value), format_type(vtype)))

    def check(self, expr):
        '''Returns the expression with promoted literals and its value type'''
        if isinstance(expr, Literal):
            return expr, expr.vtype
        if isinstance(expr, Sync):
            vtype = self._access_type(expr)
            return Sync(expr.target, expr.offset, self._default(expr.default, vtype)), vtype
        if isinstance(expr, Hold):
            vtype = self._access_type(expr)
            return Hold(expr.target, self._default(expr.default, vtype)), vtype
        if isinstance(expr, Window):
            return self.check_window(expr)
        if isinstance(expr, Unary):
            operand, vtype = self.check(expr.operand)
            if expr.op == "not" and vtype != BOOL:
                self.error("'!' needs a Bool operand, found {}".format(format_type(vtype)))
            if expr.op == "neg" and not is_numeric(vtype):
                self.error("'-' needs a numeric operand, found {}".format(format_type(vtype)))
            return Unary(expr.op, operand), vtype
        if isinstance(expr, Binary):
            return self.check_binary(expr)
        if isinstance(expr, Ite):
            condition = self.check_condition(expr.condition, "if condition")
            cons, ctype = self.check(expr.consequence)
            alt, atype = self.check(expr.alternative)
            cons, alt, vtype = self.unify(cons, ctype, alt, atype, "if branches")
            return Ite(condition, cons, alt), vtype
        if isinstance(expr, TupleProj):
            operand, vtype = self.check(expr.operand)
            if not isinstance(vtype, tuple) or expr.index >= len(vtype):
                self.error("cannot project element {} of {}".format(expr.index, format_type(vtype)))
            return TupleProj(operand, expr.index), vtype[expr.index]
        raise ValueError("Unknown expression {!r}".format(expr))

    def check_window(self, expr):
        vtype = self.stream_type(expr.target)
        if vtype is None:
            if expr.aggregation in ("count", "exists"):
                vtype = BOOL if expr.aggregation == "exists" else INT64
            elif expr.default is not None:
                vtype = expr.default.vtype
            else:
                self.error("cannot infer the value type of recursive stream '{}', annotate it".format(
                    expr.target))
        aggregation = expr.aggregation
        if aggregation == "count":
            result = INT64
        elif aggregation == "exists":
            if vtype != BOOL:
                self.error("aggregation 'exists' needs a Bool stream, '{}' is {}".format(
                    expr.target, format_type(vtype)))
            result = BOOL
        else:
            if not is_numeric(vtype):
                self.error("aggregation '{}' needs a numeric stream, '{}' is {}".format(
                    aggregation, expr.target, format_type(vtype)))
            result = FLOAT64 if aggregation == "avg" else vtype
        return Window(expr.target, expr.duration, aggregation, self._default(expr.default, result)), result

    def unify(self, lhs, ltype, rhs, rtype, what):
        if ltype == rtype:
            return lhs, rhs, ltype
        if ltype == INT64 and rtype == FLOAT64 and isinstance(lhs, Literal):
            return Literal(float(lhs.value), FLOAT64), rhs, FLOAT64
        if ltype == FLOAT64 and rtype == INT64 and isinstance(rhs, Literal):
            return lhs, Literal(float(rhs.value), FLOAT64), FLOAT64
        self.error("{} have different types {} and {}".format(what, format_type(ltype), format_type(rtype)))

    def check_binary(self, expr):
        lhs, ltype = self.check(expr.lhs)
        rhs, rtype = self.check(expr.rhs)
        op = expr.op
        if op in LOGICAL_OPS:
            if ltype != BOOL or rtype != BOOL:
                self.error("'{}' needs Bool operands, found {} and {}".format(
                    op, format_type(ltype), format_type(rtype)))
            return Binary(op, lhs, rhs), BOOL
        lhs, rhs, vtype = self.unify(lhs, ltype, rhs, rtype, "operands of '{}'".format(op))
        if op in ARITHMETIC_OPS + ORDERING_OPS and not is_numeric(vtype):
            self.error("'{}' needs numeric operands, found {}".format(op, format_type(vtype)))
        result = vtype if op in ARITHMETIC_OPS else BOOL
        return Binary(op, lhs, rhs), result


def expression_type(expr, types):
    '''Returns the value type of an already typed expression. types maps stream names to
    value types.'''
    if isinstance(expr, Literal):
        return expr.vtype
    if isinstance(expr, (Sync, Hold)):
        return types[expr.target]
    if isinstance(expr, Window):
        if expr.aggregation == "count":
            return INT64
        if expr.aggregation == "exists":
            return BOOL
        if expr.aggregation == "avg":
            return FLOAT64
        return types[expr.target]
    if isinstance(expr, Unary):
        return expression_type(expr.operand, types)
    if isinstance(expr, Binary):
        if expr.op in ARITHMETIC_OPS:
            return expression_type(expr.lhs, types)
        return BOOL
    if isinstance(expr, Ite):
        return expression_type(expr.consequence, types)
    return expression_type(expr.operand, types)[expr.index]


def _infer_pacings(spec):
    pacings = dict((i.name, EventBased(AcInput(i.name))) for i in spec.inputs)
    pending = []
    decls = [(o.name, o) for o in spec.outputs] + \
            [(_trigger_name(k), t) for k, t in enumerate(spec.triggers)]
    for name, decl in decls:
        if decl.pacing is not None:
            pacings[name] = decl.pacing
        else:
            pending.append((name, decl))
    while pending:
        unresolved = []
        for name, decl in pending:
            expression = decl.expression if isinstance(decl, OutputDecl) else decl.condition
            targets = [t for t in sync_targets(expression) if t != name]
            if decl.filter is not None:
                targets += [t for t in sync_targets(decl.filter) if t != name and t not in targets]
            if not targets:
                raise InferenceError("cannot infer the pacing of '{}': it has no synchronous access, "
                                     "annotate it".format(name), decl.position)
            if any(t not in pacings for t in targets):
                unresolved.append((name, decl))
                continue
            periodic = [t for t in targets if pacings[t].periodic]
            if periodic:
                raise KindMixError("pacing of '{}' cannot be inferred from periodic stream '{}', "
                                   "annotate it".format(name, periodic[0]), decl.position)
            pacings[name] = EventBased(ac_all(pacings[t].condition for t in targets))
            logging.debug("Inferred pacing %s for %s", pacings[name], name)
        if len(unresolved) == len(pending):
            names = ", ".join(n for n, _ in unresolved)
            raise InferenceError("cannot infer the pacing of {} (cyclic synchronous accesses), "
                                 "annotate one of them".format(names), unresolved[0][1].position)
        pending = unresolved
    return pacings


def _check_sync_accesses(name, pacing, expressions, pacings, position):
    for expr in expressions:
        for node in expr_walk(expr):
            if not isinstance(node, Sync) or node.target == name:
                continue
            target = pacings[node.target]
            if target.periodic != pacing.periodic:
                raise KindMixError("synchronous access from {} '{}' to {} '{}'".format(
                    "periodic" if pacing.periodic else "event-based", name,
                    "periodic" if target.periodic else "event-based", node.target), position)
            if not pacing_implies(pacing, target):
                raise IncompatiblePacingError(
                    "'{}' ({}) accesses '{}' ({}) synchronously, but '{}' is not due whenever '{}' is; "
                    "use hold() or change the pacing".format(name, pacing, node.target, target,
                                                             node.target, name), position)


def infer_types(spec):
    '''Resolves value types and pacing types of all streams.

    Inputs get the pacing of their own name. An output or trigger without pacing annotation gets
    the conjunction of the pacings of all streams it accesses synchronously (offset 0 or
    negative, in expression or filter, itself excluded). Periodic pacing is never inferred.

    :param spec: Spec
    :raises: :class:`InferenceError`, :class:`KindMixError`, :class:`IncompatiblePacingError`,
             :class:`ValueTypeError`, :class:`UnknownTargetError`

    :returns: the typed specification
    :rtype: TypedSpec
    '''
    names = set()
    for decl in spec.inputs + spec.outputs:
        if decl.name in names:
            raise DuplicateNameError("stream '{}' is declared twice".format(decl.name), decl.position)
        names.add(decl.name)
    inputs = set(i.name for i in spec.inputs)
    decls = [(o.name, o, [o.expression, o.filter]) for o in spec.outputs] + \
            [(_trigger_name(k), t, [t.condition, t.filter]) for k, t in enumerate(spec.triggers)]
    for name, decl, parts in decls:
        for expr in parts:
            if expr is None:
                continue
            for node in expr_accesses(expr):
                if node.target not in names:
                    raise UnknownTargetError("'{}' accesses undeclared stream '{}'".format(name, node.target),
                                             decl.position)
        if isinstance(decl.pacing, EventBased):
            unknown = decl.pacing.condition.inputs() - inputs
            if unknown:
                raise UnknownTargetError("activation condition of '{}' names '{}' which is no input "
                                         "stream".format(name, sorted(unknown)[0]), decl.position)

    typer = _ValueTyper(spec)
    for decl in spec.outputs:
        typer.type_output(decl)
    pacings = _infer_pacings(spec)

    typed_inputs = [TypedStream(i.name, "input", i.vtype, pacings[i.name], "inferred", position=i.position)
                    for i in spec.inputs]
    typed_outputs = []
    for decl in spec.outputs:
        expression, filt, vtype = typer.typed[decl.name]
        pacing = pacings[decl.name]
        _check_sync_accesses(decl.name, pacing, [e for e in (expression, filt) if e is not None],
                             pacings, decl.position)
        provenance = "annotated" if decl.pacing is not None else "inferred"
        typed_outputs.append(TypedStream(decl.name, "output", vtype, pacing, provenance, expression, filt,
                                         annotated_vtype=decl.vtype, position=decl.position))
    typed_triggers = []
    for index, decl in enumerate(spec.triggers):
        name = _trigger_name(index)
        typer._position = decl.position
        condition = typer.check_condition(decl.condition, "condition of {}".format(name))
        filt = typer.check_condition(decl.filter, "filter of {}".format(name))
        pacing = pacings[name]
        _check_sync_accesses(name, pacing, [e for e in (condition, filt) if e is not None],
                             pacings, decl.position)
        provenance = "annotated" if decl.pacing is not None else "inferred"
        typed_triggers.append(TypedStream(name, "trigger", BOOL, pacing, provenance, condition, filt,
                                          decl.message, index=index, position=decl.position))
    return TypedSpec(typed_inputs, typed_outputs, typed_triggers)

################################################################################
# Analysis: dependency graph, evaluation order, memory, schedule
################################################################################

def filter_node(name):
    return name + FILTER_SUFFIX


class Edge(_InitArgsRepr):
    '''Access from source (the accessing node) to target. kind is sync, hold or window.'''
    def __init__(self, source, target, kind, offset=0, duration=None):
        self.source = source
        self.target = target
        self.kind = kind
        self.offset = offset
        self.duration = duration

    def is_ordering(self):
        '''Edges whose target must be evaluated first in the same cycle'''
        return self.kind != "sync" or self.offset == 0


class DependencyGraph(object):
    '''Nodes are inputs, outputs, triggers and filter nodes. A filter node guards its stream.'''
    def __init__(self, nodes, kinds, guards, edges):
        self.nodes = list(nodes)
        self.kinds = dict(kinds)
        self.guards = dict(guards)
        self.edges = list(edges)
        self._outgoing = dict((n, []) for n in self.nodes)
        self._incoming = dict((n, []) for n in self.nodes)
        for edge in self.edges:
            self._outgoing[edge.source].append(edge)
            self._incoming[edge.target].append(edge)

    def outgoing(self, node):
        return self._outgoing[node]

    def incoming(self, node):
        return self._incoming[node]

    def stream_of(self, node):
        '''Returns the stream a node evaluates for: the guarded stream for filter nodes'''
        return self.guards.get(node, node)

    def filter_of(self, stream):
        name = filter_node(stream)
        return name if name in self.guards else None


def build_dependency_graph(ts):
    '''Returns the dependency graph of a TypedSpec. One edge per access occurrence.'''
    nodes, kinds, guards, edges = [], {}, {}, []
    for stream in ts.inputs:
        nodes.append(stream.name)
        kinds[stream.name] = "input"
    for stream in ts.outputs + ts.triggers:
        nodes.append(stream.name)
        kinds[stream.name] = stream.kind
        sources = [(stream.name, stream.expression)]
        if stream.filter is not None:
            fname = filter_node(stream.name)
            nodes.append(fname)
            kinds[fname] = "filter"
            guards[fname] = stream.name
            sources.append((fname, stream.filter))
        for source, expr in sources:
            for node in expr_accesses(expr):
                if isinstance(node, Sync):
                    edges.append(Edge(source, node.target, "sync", offset=node.offset))
                elif isinstance(node, Hold):
                    edges.append(Edge(source, node.target, "hold"))
                else:
                    edges.append(Edge(source, node.target, "window", duration=node.duration))
    return DependencyGraph(nodes, kinds, guards, edges)


class EvaluationOrder(object):
    def __init__(self, layers):
        self.layers = layers
        self._layer = {}
        for index, layer in enumerate(layers):
            for node in layer:
                self._layer[node] = index

    def layer_of(self, node):
        return self._layer[node]

    def sequence(self):
        return [node for layer in self.layers for node in layer]

    def __repr__(self):
        return "EvaluationOrder({})".format(self.layers)


def ordering_dependencies(graph):
    '''Maps every node to the nodes that must be evaluated before it within one cycle'''
    deps = dict((n, []) for n in graph.nodes)
    for edge in graph.edges:
        if not edge.is_ordering():
            continue
        # a stream reading its own past (hold or window) is fine
        if graph.stream_of(edge.source) == edge.target and edge.kind != "sync":
            continue
        if edge.target not in deps[edge.source]:
            deps[edge.source].append(edge.target)
    for fnode, stream in graph.guards.items():
        deps[stream].append(fnode)
    return deps


def evaluation_order(graph):
    '''Assigns every node the length of its longest ordering path. Inputs are layer 0,
    everything else is at least layer 1.

    :raises: :class:`CycleError`: the ordering edges contain a cycle
    '''
    deps = ordering_dependencies(graph)
    layer = {}
    onstack = []

    def visit(node):
        if node in layer:
            return layer[node]
        if node in onstack:
            cycle = onstack[onstack.index(node):] + [node]
            raise CycleError(cycle)
        onstack.append(node)
        if graph.kinds[node] == "input":
            value = 0
        else:
            value = 1 + max([visit(d) for d in deps[node]] + [0])
        onstack.pop()
        layer[node] = value
        return value

    for node in graph.nodes:
        visit(node)
    layers = [[] for _ in range(max(layer.values()) + 1)] if layer else []
    for node in graph.nodes:
        layers[layer[node]].append(node)
    return EvaluationOrder(layers)


def memory_bounds(graph):
    '''Returns the number of values each input and output must retain: 1 + the largest
    absolute synchronous offset used on it'''
    bounds = {}
    for node in graph.nodes:
        if graph.kinds[node] in ("input", "output"):
            bounds[node] = 1
    for edge in graph.edges:
        if edge.kind == "sync":
            bounds[edge.target] = max(bounds[edge.target], 1 - edge.offset)
    return bounds


def window_bounds(graph):
    '''Returns the longest window duration per window target'''
    spans = {}
    for edge in graph.edges:
        if edge.kind == "window":
            spans[edge.target] = max(spans.get(edge.target, edge.duration), edge.duration)
    return spans


class Schedule(object):
    '''Static schedule of periodic streams: deadlines within one hyperperiod, repeated'''
    def __init__(self, hyperperiod, deadlines):
        self.hyperperiod = hyperperiod
        self.deadlines = deadlines

    def unroll(self, until):
        '''Yields (time, names) for every deadline in (0, until]'''
        if self.hyperperiod is None or until is None:
            return
        for cycle in itertools.count():
            base = cycle * self.hyperperiod
            for offset, names in self.deadlines:
                moment = base + offset
                if moment > until:
                    return
                yield moment, names

    def __repr__(self):
        return "Schedule(hyperperiod={}, deadlines={})".format(
            format_decimal(self.hyperperiod) if self.hyperperiod is not None else None,
            [(format_decimal(t), n) for t, n in self.deadlines])


def compute_schedule(ts):
    '''Computes the hyperperiod (rational lcm of all periods) and the deadlines within it.
    A stream with period p is due at k*p for k = 1 .. hyperperiod/p.'''
    periodic = [s for s in ts.outputs + ts.triggers if s.pacing.periodic]
    if not periodic:
        return Schedule(None, [])
    hyperperiod = reduce(_fraction_lcm, [s.pacing.frequency.period for s in periodic])
    due = {}
    for stream in periodic:
        period = stream.pacing.frequency.period
        for k in range(1, int(hyperperiod / period) + 1):
            due.setdefault(k * period, []).append(stream.name)
    deadlines = [(t, tuple(due[t])) for t in sorted(due)]
    logging.debug("Schedule: hyperperiod %s, %d deadlines", hyperperiod, len(deadlines))
    return Schedule(hyperperiod, deadlines)

################################################################################
# Reports
################################################################################

class ReportGroup(_InitArgsRepr):
    '''Base class of all reports. Counters live in _data, nested reports in _instances.

    Reports can be written as nested dictionaries (get), as JSON (get_json) or as
    tab-separated key/value lines (get_text).
    '''
    def __init__(self, name=None):
        self.name = name
        self._data = {}
        self._instances = []

    def __getitem__(self, key):
        return self._data[key]

    def __setitem__(self, key, value):
        self._data[key] = value

    def get(self, meta=False):
        '''Return the report as dictionary'''
        out = dict(self._data)
        if meta and self.name:
            out["_name"] = self.name
        for inst in self._instances:
            out[inst.name] = inst.get(meta=meta)
        return out

    def get_json(self, sort=False, intend=4, meta=False):
        '''Return the report as JSON string'''
        return json.dumps(self.get(meta=meta), sort_keys=sort, indent=intend, default=str)

    def get_text(self):
        '''Return the report as key<TAB>value lines, nested keys joined with dots'''
        lines = []
        def walk(prefix, value):
            if isinstance(value, dict):
                for key in value:
                    walk("{}.{}".format(prefix, key) if prefix else str(key), value[key])
            elif isinstance(value, (list, tuple)):
                lines.append("{}\t{}".format(prefix, ",".join(str(v) for v in value)))
            else:
                lines.append("{}\t{}".format(prefix, value))
        walk("", self.get())
        return "\n".join(lines) + "\n"


class EvalStats(ReportGroup):
    '''Evaluation counters of one interpreter run. For every node: eval_count, filter_checks and
    filter_suppressed. Filter suppressions count towards filter_checks only.'''
    def __init__(self, name="stats"):
        super(EvalStats, self).__init__(name)
        self.nodes = {}
        self._data["cycle_count"] = 0
        self._data["wall_time_ns"] = 0

    def add_node(self, name):
        self.nodes[name] = {"eval_count": 0, "filter_checks": 0, "filter_suppressed": 0}

    def eval_count(self, name):
        return self.nodes[name]["eval_count"]

    def filter_checks(self, name):
        return self.nodes[name]["filter_checks"]

    def filter_suppressed(self, name):
        return self.nodes[name]["filter_suppressed"]

    @property
    def cycle_count(self):
        return self._data["cycle_count"]

    @property
    def wall_time_ns(self):
        return self._data["wall_time_ns"]

    def total_evaluations(self, inputs=None):
        '''Sum of eval_count over all non-input streams'''
        inputs = inputs or ()
        return sum(c["eval_count"] for n, c in self.nodes.items() if n not in inputs)

    def get(self, meta=False):
        out = super(EvalStats, self).get(meta=meta)
        out["nodes"] = dict((n, dict(c)) for n, c in self.nodes.items())
        return out

################################################################################
# Interpreter
################################################################################

class Event(object):
    '''Input event: a time stamp and the values of the inputs it covers'''
    __slots__ = ("time", "values")
    def __init__(self, time, values):
        self.time = tofraction(time)
        self.values = dict(values)
    def __eq__(self, other):
        if not isinstance(other, Event):
            return NotImplemented
        return self.time == other.time and list(self.values) == list(other.values) and \
            all(_value_key(self.values[k]) == _value_key(other.values[k]) for k in self.values)
    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res
    def __repr__(self):
        return "Event({}, {!r})".format(format_decimal(self.time), self.values)


class Observation(object):
    '''A trigger firing: time, trigger index and message'''
    __slots__ = ("time", "trigger", "message")
    def __init__(self, time, trigger, message=None):
        self.time = tofraction(time)
        self.trigger = trigger
        self.message = message
    def key(self):
        return (self.time, self.trigger, self.message)
    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return self.key() == other.key()
    def __ne__(self, other):
        res = self.__eq__(other)
        return res if res is NotImplemented else not res
    def __hash__(self):
        return hash(self.key())
    def __repr__(self):
        return "Observation({}, {}, {!r})".format(format_decimal(self.time), self.trigger, self.message)
    def format(self):
        return "{}\t{}\t{}".format(format_decimal(self.time), self.trigger, self.message or "")


class _StreamState(object):
    '''Runtime buffer of one input or output: the last values (bounded) and, for window
    targets, a time-stamped window buffer'''
    __slots__ = ("name", "default", "history", "count", "cycle", "window", "span")
    def __init__(self, name, vtype, bound, span=None):
        self.name = name
        self.default = type_default(vtype)
        self.history = deque(maxlen=bound)
        self.count = 0
        self.cycle = -1
        self.span = span
        self.window = deque() if span is not None else None

    def extend(self, value, moment, cycle):
        self.history.append(value)
        self.count += 1
        self.cycle = cycle
        if self.window is not None:
            window = self.window
            window.append((moment, value))
            horizon = moment - self.span
            while window[0][0] < horizon:
                window.popleft()


def _aggregate(aggregation, values, default, vtype):
    if aggregation == "count":
        return len(values)
    if aggregation == "exists":
        return any(values)
    if aggregation == "sum":
        # IEEE left fold for Float64, overflow reaches +-inf instead of raising
        total = reduce(operator.add, values, type_default(vtype))
        return _check_int(total) if vtype == INT64 else total
    if not values:
        return default
    if aggregation == "avg":
        return reduce(operator.add, values, 0.0) / len(values)
    if aggregation == "min":
        return min(values)
    return max(values)


class Monitor(object):
    '''Evaluates one TypedSpec over a trace. Create one instance per run.

    An evaluation cycle starts for every input event and for every deadline of the periodic
    schedule; a deadline at the time of an event is handled in the cycle of the first event at
    that time. Per cycle the covered inputs are extended, then every due node is evaluated in
    evaluation order: the filter first, the stream only if the filter holds.
    '''
    def __init__(self, ts):
        self.ts = ts
        self.graph = build_dependency_graph(ts)
        self.order = evaluation_order(self.graph)
        self.schedule = compute_schedule(ts)
        self.types = dict((s.name, s.vtype) for s in ts.streams())
        bounds = memory_bounds(self.graph)
        spans = window_bounds(self.graph)
        self.state = {}
        for stream in ts.inputs + ts.outputs:
            self.state[stream.name] = _StreamState(stream.name, stream.vtype, bounds[stream.name],
                                                   spans.get(stream.name))
        self.now = Fraction(0)
        self.cycle = -1
        self.stats = EvalStats()
        for node in self.graph.nodes:
            if self.graph.kinds[node] != "filter":
                self.stats.add_node(node)
        self.sequence = []
        self._nodes = {}
        for node in self.order.sequence():
            if self.graph.kinds[node] in ("input", "filter"):
                continue
            stream = ts.get(node)
            filt = self._compile(stream.filter)[0] if stream.filter is not None else None
            expression = self._compile(stream.expression)[0]
            self.sequence.append(node)
            self._nodes[node] = (stream, self.state.get(node), filt, expression, self.stats.nodes[node])
        self._due_cache = {}
        self._observations = []

    # compilation of expressions into closures

    def _compile(self, expr):
        '''Returns (function, value type) for an expression'''
        monitor = self
        if isinstance(expr, Literal):
            value = expr.value
            return (lambda: value), expr.vtype
        if isinstance(expr, Sync):
            state = self.state[expr.target]
            vtype = self.types[expr.target]
            if expr.offset == 0:
                default = state.default
                def sync():
                    history = state.history
                    return history[-1] if history else default
                return sync, vtype
            steps = -expr.offset
            default = expr.default.value
            def offset():
                # values before the current cycle only
                current = state.cycle == monitor.cycle
                previous = state.count - 1 if current else state.count
                if previous < steps:
                    return default
                return state.history[-1 - steps] if current else state.history[-steps]
            return offset, vtype
        if isinstance(expr, Hold):
            state = self.state[expr.target]
            default = expr.default.value
            def hold():
                history = state.history
                return history[-1] if history else default
            return hold, self.types[expr.target]
        if isinstance(expr, Window):
            state = self.state[expr.target]
            duration = expr.duration
            aggregation = expr.aggregation
            default = expr.default.value if expr.default is not None else None
            element = self.types[expr.target]
            def window():
                horizon = monitor.now - duration
                values = []
                for moment, value in reversed(state.window):
                    if moment < horizon:
                        break
                    values.append(value)
                values.reverse()
                return _aggregate(aggregation, values, default, element)
            vtype = expression_type(expr, self.types)
            return window, vtype
        if isinstance(expr, Unary):
            operand, vtype = self._compile(expr.operand)
            if expr.op == "not":
                return (lambda: not operand()), vtype
            if vtype == INT64:
                return (lambda: _check_int(-operand())), vtype
            return (lambda: -operand()), vtype
        if isinstance(expr, Binary):
            lhs, ltype = self._compile(expr.lhs)
            rhs, _ = self._compile(expr.rhs)
            if expr.op == "&&":
                return (lambda: lhs() and rhs()), BOOL
            if expr.op == "||":
                return (lambda: lhs() or rhs()), BOOL
            function = binary_function(expr.op, ltype)
            result = ltype if expr.op in ARITHMETIC_OPS else BOOL
            return (lambda: function(lhs(), rhs())), result
        if isinstance(expr, Ite):
            condition, _ = self._compile(expr.condition)
            cons, vtype = self._compile(expr.consequence)
            alt, _ = self._compile(expr.alternative)
            return (lambda: cons() if condition() else alt()), vtype
        operand, vtype = self._compile(expr.operand)
        index = expr.index
        return (lambda: operand()[index]), vtype[index]

    # evaluation

    def _due_events(self, covered):
        due = self._due_cache.get(covered)
        if due is None:
            due = frozenset(n for n in self.sequence
                            if not self.ts.pacing(n).periodic and self.ts.pacing(n).condition.evaluate(covered))
            self._due_cache[covered] = due
        return due

    def _cycle(self, moment, values, deadline):
        self.cycle += 1
        self.now = moment
        cycle = self.cycle
        stats = self.stats
        stats["cycle_count"] += 1
        for name, value in values.items():
            self.state[name].extend(value, moment, cycle)
            stats.nodes[name]["eval_count"] += 1
        due = self._due_events(frozenset(values)) if values else frozenset()
        if deadline:
            due = due | frozenset(deadline)
        if not due:
            return
        fired = []
        for name in self.sequence:
            if name not in due:
                continue
            stream, state, filt, expression, counters = self._nodes[name]
            try:
                if filt is not None:
                    counters["filter_checks"] += 1
                    if not filt():
                        counters["filter_suppressed"] += 1
                        continue
                value = expression()
            except ArithmeticFault as e:
                fired.sort(key=lambda f: f[0])
                self._observations.extend(Observation(moment, i, m) for i, m in fired)
                raise RuntimeFault(name, moment, e.message, self._observations)
            counters["eval_count"] += 1
            if state is not None:
                state.extend(value, moment, cycle)
            elif value:
                fired.append((stream.index, stream.message))
        fired.sort(key=lambda f: f[0])
        self._observations.extend(Observation(moment, i, m) for i, m in fired)

    def _check_event(self, event, last):
        if last is not None and event.time < last:
            raise TraceError("event at time {} precedes time {}".format(
                format_decimal(event.time), format_decimal(last)))
        if event.time < 0:
            raise TraceError("negative event time {}".format(format_decimal(event.time)))
        if not event.values:
            raise TraceError("event at time {} carries no input value".format(format_decimal(event.time)))
        values = {}
        for name, value in event.values.items():
            if name not in self.ts or self.ts.get(name).kind != "input":
                raise TraceError("event at time {} names unknown input '{}'".format(
                    format_decimal(event.time), name))
            try:
                values[name] = coerce_value(value, self.types[name])
            except ValueError as e:
                raise TraceError("input '{}' at time {}: {}".format(name, format_decimal(event.time), e))
        return values

    def run(self, events, end=None):
        '''Processes all events and the periodic deadlines up to end (default: time of the last
        event).

        :returns: observations in emission order and the evaluation statistics
        :rtype: tuple(list, EvalStats)
        '''
        events = list(events)
        if end is None:
            end = events[-1].time if events else Fraction(0)
        end = tofraction(end)
        start = time.perf_counter_ns()
        deadlines = self.schedule.unroll(end)
        pending = next(deadlines, None)
        last = None
        for event in events:
            values = self._check_event(event, last)
            last = event.time
            while pending is not None and pending[0] < event.time:
                self._cycle(pending[0], {}, pending[1])
                pending = next(deadlines, None)
            deadline = None
            if pending is not None and pending[0] == event.time:
                deadline = pending[1]
                pending = next(deadlines, None)
            self._cycle(event.time, values, deadline)
        while pending is not None:
            self._cycle(pending[0], {}, pending[1])
            pending = next(deadlines, None)
        self.stats["wall_time_ns"] = time.perf_counter_ns() - start
        logging.debug("Run finished: %d cycles, %d observations", self.stats.cycle_count,
                      len(self._observations))
        return self._observations, self.stats


def run(ts, trace, end=None):
    '''Evaluates ts over a trace of events.

    :param ts: TypedSpec
    :param trace: iterable of Event, time stamps non-decreasing
    :param end: evaluate periodic deadlines up to this time (default: last event time)
    :raises: :class:`RuntimeFault`: an evaluation faulted, carries earlier observations
    :raises: :class:`TraceError`: malformed trace

    :returns: observations and evaluation statistics
    :rtype: tuple(list of Observation, EvalStats)
    '''
    return Monitor(ts).run(trace, end)

################################################################################
# Passes: reports and helpers
################################################################################

class PassReport(ReportGroup):
    '''Counters of one pass run (or of a whole pipeline run, with one sub-report per pass)'''
    COUNTERS = ("constants_folded", "streams_inlined", "streams_removed", "subexpressions_extracted",
                "pacings_refined", "filters_added", "sync_to_hold_rewrites", "annotations_materialized")

    def __init__(self, name="pipeline"):
        super(PassReport, self).__init__(name)
        for counter in self.COUNTERS:
            self._data[counter] = 0
        self._data["streams_before"] = 0
        self._data["streams_after"] = 0

    def count(self, counter, amount=1):
        self._data[counter] += amount

    def changed(self):
        return any(self._data[c] > 0 for c in self.COUNTERS)

    def merge(self, other):
        for counter in self.COUNTERS:
            self._data[counter] += other[counter]

    def sub_report(self, name):
        for inst in self._instances:
            if inst.name == name:
                return inst
        inst = PassReport(name)
        self._instances.append(inst)
        return inst


def _start_report(name, ts):
    report = PassReport(name)
    report["streams_before"] = len(ts.outputs)
    report["streams_after"] = len(ts.outputs)
    return report

def _finish(report, ts):
    report["streams_after"] = len(ts.outputs)
    logging.info("Pass %s: %s", report.name,
                 ", ".join("{}={}".format(c, report[c]) for c in report.COUNTERS if report[c]) or "no change")
    return ts, report

def _stream_types(ts):
    return dict((s.name, s.vtype) for s in ts.streams())

def _decls_by_name(spec):
    out = dict((o.name, o) for o in spec.outputs)
    for index, trigger in enumerate(spec.triggers):
        out[_trigger_name(index)] = trigger
    return out

def _decl_body(decl):
    return decl.expression if isinstance(decl, OutputDecl) else decl.condition

def _set_decl_body(decl, expr):
    if isinstance(decl, OutputDecl):
        decl.expression = expr
    else:
        decl.condition = expr

def _materialize(decl, pacing, report):
    if decl.pacing is None:
        decl.pacing = pacing
        report.count("annotations_materialized")

def fault_free(expr, types):
    '''Returns True if evaluating expr can never raise an arithmetic fault: no Int64 arithmetic
    except division and remainder by a literal other than 0 and -1, no Int64 sum windows'''
    for node in expr_walk(expr):
        if isinstance(node, Binary) and node.op in ARITHMETIC_OPS:
            if expression_type(node.lhs, types) != INT64:
                continue
            if node.op in ("/", "%") and isinstance(node.rhs, Literal) and node.rhs.value not in (0, -1):
                continue
            return False
        if isinstance(node, Unary) and node.op == "neg" and expression_type(node.operand, types) == INT64:
            return False
        if isinstance(node, Window) and node.aggregation == "sum" and types[node.target] == INT64:
            return False
    return True

################################################################################
# Passes: constant folding
################################################################################

def _fold(expr, counter):
    if isinstance(expr, (Literal,) + ACCESS_TYPES):
        return expr
    try:
        if isinstance(expr, Ite):
            condition = _fold(expr.condition, counter)
            if isinstance(condition, Literal):
                counter[0] += 1
                return _fold(expr.consequence if condition.value else expr.alternative, counter)
            return Ite(condition, _fold(expr.consequence, counter), _fold(expr.alternative, counter))
        if isinstance(expr, Binary) and expr.op in LOGICAL_OPS:
            dominant = expr.op == "||"
            lhs = _fold(expr.lhs, counter)
            if isinstance(lhs, Literal):
                counter[0] += 1
                if lhs.value == dominant:
                    return Literal(dominant, BOOL)
                return _fold(expr.rhs, counter)
            rhs = _fold(expr.rhs, counter)
            if isinstance(rhs, Literal):
                counter[0] += 1
                if rhs.value == dominant:
                    return Literal(dominant, BOOL)
                return lhs
            return Binary(expr.op, lhs, rhs)
        children = [_fold(c, counter) for c in expr.children()]
        if not all(isinstance(c, Literal) for c in children):
            return expr.with_children(children)
        if isinstance(expr, Unary):
            operand = children[0]
            value = apply_unary(expr.op, operand.value, operand.vtype)
            folded = Literal(value, operand.vtype)
        elif isinstance(expr, Binary):
            lhs, rhs = children
            value = apply_binary(expr.op, lhs.value, rhs.value, lhs.vtype)
            folded = Literal(value, lhs.vtype if expr.op in ARITHMETIC_OPS else BOOL)
        else:
            operand = children[0]
            folded = Literal(operand.value[expr.index], operand.vtype[expr.index])
    except ArithmeticFault as e:
        raise FoldError("folding '{}' would fault: {}".format(pretty_expr(expr), e.message))
    counter[0] += 1
    return folded


def fold_constants(expr):
    '''Evaluates every subexpression whose operands are literals, bottom-up. && and || are
    decided by one literal operand, an if with literal condition selects its branch. Accesses are
    never folded.

    :raises: :class:`FoldError`: a folded operation would fault at runtime

    :returns: folded expression
    :rtype: Expression
    '''
    return _fold(expr, [0])


def fold_pass(ts):
    '''Folds constants in every expression and filter. Streams whose expression changes keep
    their current pacing as annotation.'''
    report = _start_report("fold", ts)
    spec = ts.to_spec()
    decls = _decls_by_name(spec)
    changed = False
    for stream in ts.outputs + ts.triggers:
        decl = decls[stream.name]
        counter = [0]
        body = _fold(_decl_body(decl), counter)
        filt = _fold(decl.filter, counter) if decl.filter is not None else None
        if counter[0]:
            changed = True
            report.count("constants_folded", counter[0])
            _set_decl_body(decl, body)
            decl.filter = filt
            _materialize(decl, stream.pacing, report)
    if not changed:
        return _finish(report, ts)
    return _finish(report, infer_types(spec))

################################################################################
# Passes: sparse conditional constant propagation
################################################################################

def _inline_constants(expr, pacing, constants, ts, inlined=None):
    def replace(node):
        if isinstance(node, Sync) and node.target in constants:
            literal = constants[node.target]
            if node.offset == 0 or node.default == literal:
                if inlined is not None:
                    inlined.add(node.target)
                return literal
        elif isinstance(node, Hold) and node.target in constants:
            literal = constants[node.target]
            if node.default == literal or pacing_implies(pacing, ts.pacing(node.target)):
                if inlined is not None:
                    inlined.add(node.target)
                return literal
        return None
    return expr_transform(expr, replace)


def find_constants(ts):
    '''Returns the unfiltered outputs that always evaluate to the same literal, as a mapping
    from name to Literal'''
    constants = {}
    changed = True
    while changed:
        changed = False
        for stream in ts.outputs:
            if stream.name in constants or stream.filter is not None:
                continue
            expr = _fold(_inline_constants(stream.expression, stream.pacing, constants, ts), [0])
            if isinstance(expr, Literal):
                constants[stream.name] = expr
                changed = True
                logging.debug("Stream %s is constant %s", stream.name, format_value(expr.value))
    return constants


def sccp(ts):
    '''Finds constant streams, replaces accesses to them by their value, folds and removes
    streams that are no longer needed. All inferred pacings are materialized first so that
    removing accesses cannot change any pacing.

    Replacement rules: a synchronous access at offset 0 is always replaced; at a negative offset
    only if its default equals the constant. A hold is replaced if the accessor's pacing implies
    the constant's or its default equals the constant. Windows are never replaced.
    '''
    report = _start_report("sccp", ts)
    constants = find_constants(ts)
    spec = ts.to_spec(materialize=True)
    report.count("annotations_materialized",
                 sum(1 for s in ts.outputs + ts.triggers if s.provenance == "inferred"))
    decls = _decls_by_name(spec)
    inlined = set()
    counter = [0]
    for stream in ts.outputs + ts.triggers:
        decl = decls[stream.name]
        body = _inline_constants(_decl_body(decl), stream.pacing, constants, ts, inlined)
        _set_decl_body(decl, _fold(body, counter))
        if decl.filter is not None:
            decl.filter = _fold(_inline_constants(decl.filter, stream.pacing, constants, ts, inlined),
                                counter)
    report.count("constants_folded", counter[0])
    report.count("streams_inlined", len(inlined))
    if not report.changed():
        return _finish(report, ts)
    ts = infer_types(spec)
    ts, dse_report = dead_stream_elim(ts)
    report.merge(dse_report)
    return _finish(report, ts)

################################################################################
# Passes: dead stream elimination
################################################################################

def live_streams(ts, graph=None):
    '''Returns the set of nodes reachable from the triggers (and their filters)'''
    graph = graph or build_dependency_graph(ts)
    stack = []
    for trigger in ts.triggers:
        stack.append(trigger.name)
        if graph.filter_of(trigger.name):
            stack.append(graph.filter_of(trigger.name))
    live = set(stack)
    while stack:
        node = stack.pop()
        for edge in graph.outgoing(node):
            if edge.target in live:
                continue
            live.add(edge.target)
            stack.append(edge.target)
            fnode = graph.filter_of(edge.target)
            if fnode:
                live.add(fnode)
                stack.append(fnode)
    return live


def dead_stream_elim(ts):
    '''Removes every output that no trigger depends on, through any kind of access.
    Inputs are always kept.'''
    report = _start_report("dse", ts)
    live = live_streams(ts)
    removed = [s.name for s in ts.outputs if s.name not in live]
    if not removed:
        return _finish(report, ts)
    logging.debug("Removing dead streams %s", ", ".join(removed))
    spec = ts.to_spec()
    spec.outputs = [o for o in spec.outputs if o.name in live]
    report.count("streams_removed", len(removed))
    return _finish(report, infer_types(spec))

################################################################################
# Passes: common subexpression elimination
################################################################################

_CSE_NODES = (Unary, Binary, Ite, TupleProj, Window)

def _cse_occurrences(ts):
    occurrences = {}
    order = []
    for stream in ts.outputs + ts.triggers:
        for part in stream.parts():
            for node in expr_walk(part):
                if not isinstance(node, _CSE_NODES):
                    continue
                if node not in occurrences:
                    occurrences[node] = []
                    order.append(node)
                occurrences[node].append(stream.name)
    candidates = [(e, occurrences[e]) for e in order if len(occurrences[e]) >= 2]
    # stable sort: equal sizes stay in order of first occurrence
    candidates.sort(key=lambda item: -expr_size(item[0]))
    return candidates


def _cse_pacing(ts, candidate, hosts, types):
    '''Returns the pacing of a stream computing candidate for all hosts, or None if the candidate
    cannot be extracted'''
    if not fault_free(candidate, types):
        return None
    for node in expr_accesses(candidate):
        if node.target in hosts:
            return None
        if isinstance(node, Sync) and node.offset < 0:
            return None
    pacings = [ts.pacing(h) for h in hosts]
    if len(set(p.periodic for p in pacings)) > 1:
        return None
    if pacings[0].periodic:
        frequency = reduce(freq_lcm, [p.frequency for p in pacings])
        if frequency not in [p.frequency for p in pacings]:
            return None
        return Periodic(frequency)
    return EventBased(ac_any(p.condition for p in pacings))


def _fresh_name(ts):
    index = 0
    while "{}{}".format(CSE_PREFIX, index) in ts:
        index += 1
    return "{}{}".format(CSE_PREFIX, index)


def cse(ts):
    '''Extracts subexpressions occurring at least twice into new streams, largest first.

    The new stream is due whenever any host is due (disjunction for event-based hosts, the
    fastest host frequency for periodic hosts, which must be a multiple of all others). Hosts of
    different kinds, candidates that may fault and candidates with negative offsets are skipped.
    '''
    report = _start_report("cse", ts)
    rejected = set()
    while True:
        types = _stream_types(ts)
        choice = None
        for candidate, hosts in _cse_occurrences(ts):
            if candidate in rejected:
                continue
            unique_hosts = list(dict.fromkeys(hosts))
            pacing = _cse_pacing(ts, candidate, unique_hosts, types)
            if pacing is None:
                rejected.add(candidate)
                continue
            choice = (candidate, unique_hosts, pacing)
            break
        if choice is None:
            break
        candidate, hosts, pacing = choice
        name = _fresh_name(ts)
        spec = ts.to_spec()
        decls = _decls_by_name(spec)
        replacement = Sync(name)
        def replace(node):
            return replacement if node == candidate else None
        for host in hosts:
            decl = decls[host]
            _set_decl_body(decl, expr_transform(_decl_body(decl), replace))
            if decl.filter is not None:
                decl.filter = expr_transform(decl.filter, replace)
            _materialize(decl, ts.pacing(host), report)
        position = len(spec.outputs)
        for index, decl in enumerate(spec.outputs):
            if decl.name in hosts:
                position = index
                break
        spec.outputs.insert(position, OutputDecl(name, candidate, pacing=pacing))
        try:
            new_ts = infer_types(spec)
            evaluation_order(build_dependency_graph(new_ts))
        except (TypeCheckError, CycleError) as e:
            logging.debug("Not extracting %s: %s", pretty_expr(candidate), e)
            rejected.add(candidate)
            continue
        logging.debug("Extracted %s into %s %s", pretty_expr(candidate), name, pacing)
        report.count("subexpressions_extracted")
        ts = new_ts
    return _finish(report, ts)

################################################################################
# Passes: pacing type refinement
################################################################################

def pacing_refinement(ts):
    '''Narrows the pacing of outputs that are only accessed synchronously at offset 0 to the
    disjunction (event-based) or least common multiple (periodic) of their accessors' pacings.
    Outputs with filters, hold, window or offset accesses and triggers are left unchanged.
    Repeats until nothing changes.'''
    report = _start_report("ptr", ts)
    refined = set()
    while True:
        graph = build_dependency_graph(ts)
        updates = {}
        for stream in ts.outputs:
            if stream.filter is not None:
                continue
            edges = graph.incoming(stream.name)
            if not edges or any(e.kind != "sync" or e.offset != 0 for e in edges):
                continue
            pacings = [ts.pacing(graph.stream_of(e.source)) for e in edges]
            if any(p.periodic != stream.pacing.periodic for p in pacings):
                continue
            if stream.pacing.periodic:
                new = Periodic(reduce(freq_lcm, [p.frequency for p in pacings]))
            else:
                new = EventBased(ac_any(p.condition for p in pacings))
            if pacing_equivalent(new, stream.pacing) or not pacing_implies(new, stream.pacing):
                continue
            updates[stream.name] = new
        if not updates:
            break
        spec = ts.to_spec()
        for decl in spec.outputs:
            if decl.name in updates:
                logging.debug("Refining pacing of %s from %s to %s", decl.name, ts.pacing(decl.name),
                              updates[decl.name])
                decl.pacing = updates[decl.name]
        refined.update(updates)
        ts = infer_types(spec)
    report.count("pacings_refined", len(refined))
    return _finish(report, ts)

################################################################################
# Passes: filter refinement
################################################################################

_ALWAYS = object()

def _reads(expr, target):
    return any(n.target == target for n in expr_accesses(expr))

def _guard_of(expr, target, nested=False):
    '''Returns the condition under which evaluating expr reads target at offset 0, _ALWAYS if it
    may read it unconditionally and None if it never reads it'''
    if isinstance(expr, Sync):
        return _ALWAYS if expr.target == target and expr.offset == 0 else None
    if isinstance(expr, Ite):
        if _reads(expr.condition, target):
            return _ALWAYS
        cons = _guard_of(expr.consequence, target, True)
        alt = _guard_of(expr.alternative, target, True)
        terms = []
        if cons is not None:
            terms.append(expr.condition if cons is _ALWAYS else conjoin(expr.condition, cons))
        if alt is not None:
            negated = negate(expr.condition)
            terms.append(negated if alt is _ALWAYS else conjoin(negated, alt))
        if not terms:
            return None
        if len(terms) == 2 and not nested:
            return _ALWAYS
        return disjoin(terms)
    guards = [g for g in (_guard_of(c, target, nested) for c in expr.children()) if g is not None]
    if not guards:
        return None
    if any(g is _ALWAYS for g in guards):
        return _ALWAYS
    if len(guards) == 1:
        return guards[0]
    return disjoin(guards) if nested else _ALWAYS


def _reachable(deps, starts):
    seen = set()
    stack = list(starts)
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        stack.extend(deps.get(node, ()))
    return seen


def _filter_plan(ts, graph, stream, types, deps):
    '''Returns (condition, hosts) if all accesses to stream are guarded, else None'''
    edges = graph.incoming(stream.name)
    if not edges:
        return None
    if any(e.kind != "sync" or e.offset != 0 for e in edges):
        return None
    if any(graph.kinds[e.source] == "filter" for e in edges):
        return None
    hosts = list(dict.fromkeys(e.source for e in edges))
    sites = []
    for host in hosts:
        guard = _guard_of(ts.get(host).expression, stream.name)
        if guard is None or guard is _ALWAYS:
            return None
        sites.append(guard)
    condition = disjoin(sites)
    if not fault_free(condition, types):
        return None
    for node in expr_walk(condition):
        if isinstance(node, Sync) and not pacing_implies(stream.pacing, ts.pacing(node.target)):
            return None
    names = [n.target for n in expr_accesses(condition)]
    if stream.name in _reachable(deps, names):
        return None
    return condition, hosts


def filter_refinement(ts):
    '''Adds a filter to outputs whose every access sits in a branch of an if, so that the output
    is only computed when one of its readers actually needs it. The accesses become holds with
    the type default, the pacings of the output and its readers are materialized. Repeats until
    nothing changes.'''
    report = _start_report("fr", ts)
    while True:
        graph = build_dependency_graph(ts)
        deps = ordering_dependencies(graph)
        types = _stream_types(ts)
        plans = []
        for stream in ts.outputs:
            plan = _filter_plan(ts, graph, stream, types, deps)
            if plan is not None:
                plans.append((stream, plan[0], plan[1]))
        if not plans:
            break
        new_ts = None
        for attempt in (plans, plans[:1]):
            spec, rewrites, materialized = _apply_filters(ts, attempt)
            try:
                new_ts = infer_types(spec)
                evaluation_order(build_dependency_graph(new_ts))
            except (TypeCheckError, CycleError) as e:
                logging.debug("Filter refinement of %d streams rejected: %s", len(attempt), e)
                new_ts = None
                continue
            break
        if new_ts is None:
            break
        for stream, condition, _ in attempt:
            logging.debug("Filtering %s with %s", stream.name, pretty_expr(condition))
        report.count("filters_added", len(attempt))
        report.count("sync_to_hold_rewrites", rewrites)
        report.count("annotations_materialized", materialized)
        ts = new_ts
    return _finish(report, ts)


def _apply_filters(ts, plans):
    spec = ts.to_spec()
    decls = _decls_by_name(spec)
    scratch = PassReport("scratch")
    rewrites = [0]
    for stream, condition, hosts in plans:
        decl = decls[stream.name]
        decl.filter = conjoin(decl.filter, condition)
        _materialize(decl, stream.pacing, scratch)
        held = Hold(stream.name, default_literal(stream.vtype))
        def replace(node, target=stream.name, held=held):
            if isinstance(node, Sync) and node.target == target and node.offset == 0:
                rewrites[0] += 1
                return held
            return None
        for host in hosts:
            host_decl = decls[host]
            _set_decl_body(host_decl, expr_transform(_decl_body(host_decl), replace))
            _materialize(host_decl, ts.pacing(host), scratch)
    return spec, rewrites[0], scratch["annotations_materialized"]

################################################################################
# Passes: pipeline
################################################################################

PASSES = {
    "fold": fold_pass,
    "sccp": sccp,
    "dse": dead_stream_elim,
    "cse": cse,
    "ptr": pacing_refinement,
    "fr": filter_refinement,
}

PASS_ALIASES = {
    "fold_constants": "fold",
    "dead_stream_elim": "dse",
    "pacing_refinement": "ptr",
    "filter_refinement": "fr",
}


def resolve_passes(passes):
    '''Returns a list of (name, function) for a comma separated pass list, a list of names or
    callables. all expands to PIPELINE_ORDER.

    :raises: :class:`ValueError`: unknown pass name
    '''
    if isinstance(passes, str):
        passes = [p.strip() for p in passes.split(",") if p.strip()]
    out = []
    for item in passes:
        if callable(item):
            out.append((getattr(item, "__name__", "custom"), item))
            continue
        name = PASS_ALIASES.get(item, item)
        if name == "all":
            out.extend((n, PASSES[n]) for n in PIPELINE_ORDER)
        elif name in PASSES:
            out.append((name, PASSES[name]))
        else:
            raise ValueError("Unknown pass '{}', known passes: all, {}".format(item, ", ".join(sorted(PASSES))))
    return out


def run_pipeline(ts, passes=DEFAULT_PASSES, max_rounds=DEFAULT_MAX_ROUNDS):
    '''Applies the passes in order, in rounds, until a round changes nothing or max_rounds is
    reached.

    :returns: transformed TypedSpec and the pipeline report (one sub-report per pass)
    :rtype: tuple(TypedSpec, PassReport)
    '''
    selected = resolve_passes(passes)
    report = _start_report("pipeline", ts)
    report["rounds"] = 0
    report["converged"] = False
    for round_index in range(max_rounds):
        changed = False
        for name, function in selected:
            ts, pass_report = function(ts)
            report.sub_report(name).merge(pass_report)
            report.merge(pass_report)
            changed = changed or pass_report.changed()
        report["rounds"] = round_index + 1
        logging.info("Round %d: %s", round_index + 1, "changed" if changed else "no change")
        if not changed:
            report["converged"] = True
            break
    report["streams_after"] = len(ts.outputs)
    return ts, report

################################################################################
# Traces
################################################################################

def _json_value(value):
    if isinstance(value, tuple):
        return [_json_value(v) for v in value]
    return value

def format_event(event, inputs):
    '''Returns one trace line: a JSON object with the exact decimal time first and the input
    values in declaration order'''
    record = {"time": format_decimal(event.time)}
    for stream in inputs:
        if stream.name in event.values:
            record[stream.name] = _json_value(event.values[stream.name])
    return json.dumps(record)

def write_trace(events, filefp, spec):
    '''Writes events as JSON lines. spec is a Spec or TypedSpec providing the input order.'''
    for event in events:
        filefp.write(format_event(event, spec.inputs))
        filefp.write("\n")

def read_trace(source, spec):
    '''Reads a JSON-lines trace.

    :param source: file name or iterable of lines
    :param spec: Spec or TypedSpec the trace belongs to
    :raises: :class:`TraceError`: malformed line, unknown input, wrong value type or time going back

    :returns: list of Event
    '''
    if isinstance(source, str):
        filefp = fopen(source)
        if filefp is None:
            raise TraceError("Trace file '{}' cannot be read".format(source))
        with filefp:
            return read_trace(filefp.read().splitlines(), spec)
    types = dict((i.name, i.vtype) for i in spec.inputs)
    events = []
    last = None
    for lineno, line in enumerate(source, 1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except ValueError as e:
            raise TraceError("trace line {}: invalid JSON: {}".format(lineno, e))
        if not isinstance(record, dict) or "time" not in record:
            raise TraceError("trace line {}: expected an object with a 'time' field".format(lineno))
        try:
            moment = tofraction(str(record.pop("time")))
        except ValueError:
            raise TraceError("trace line {}: invalid time".format(lineno))
        if moment < 0 or (last is not None and moment < last):
            raise TraceError("trace line {}: time {} is negative or precedes {}".format(
                lineno, format_decimal(moment), format_decimal(last or 0)))
        values = {}
        for name, value in record.items():
            if name not in types:
                raise TraceError("trace line {}: unknown input '{}'".format(lineno, name))
            try:
                values[name] = coerce_value(tuple(value) if isinstance(value, list) else value, types[name])
            except ValueError as e:
                raise TraceError("trace line {}: input '{}': {}".format(lineno, name, e))
        if not values:
            raise TraceError("trace line {}: no input value at time {}".format(lineno, format_decimal(moment)))
        events.append(Event(moment, values))
        last = moment
    return events


def _draw(rng, vtype, bounds, bias):
    if isinstance(vtype, tuple):
        return tuple(_draw(rng, t, bounds, bias) for t in vtype)
    if vtype == BOOL:
        return rng.random() < (DEFAULT_BOOL_BIAS if bias is None else bias)
    if vtype == INT64:
        low, high = bounds if bounds is not None else DEFAULT_INT_RANGE
        return rng.randint(int(math.ceil(low)), int(math.floor(high)))
    low, high = bounds if bounds is not None else DEFAULT_FLOAT_RANGE
    return rng.uniform(float(low), float(high))


def generate_trace(spec, duration=DEFAULT_DURATION, seed=DEFAULT_SEED, rates=None, ranges=None,
                   biases=None, period=DEFAULT_PERIOD):
    '''Generates a deterministic random trace.

    Every input with period p (rates, default period) gets a value at p, 2p, ... up to duration;
    one event is emitted per distinct time and covers all inputs due at that time. Numeric values
    are uniform in their range, booleans are true with the given bias.

    :param spec: Spec or TypedSpec
    :param duration: trace length (string with unit or seconds)
    :param seed: random seed, equal seeds give equal traces
    :param rates: dict input name -> period
    :param ranges: dict input name -> (low, high)
    :param biases: dict input name -> probability of true

    :returns: list of Event
    '''
    rng = random.Random(seed)
    duration = toduration(duration)
    rates = rates or {}
    ranges = ranges or {}
    biases = biases or {}
    for name in list(rates) + list(ranges) + list(biases):
        if name not in [i.name for i in spec.inputs]:
            raise ValueError("Unknown input '{}' in trace options".format(name))
    periods = {}
    for stream in spec.inputs:
        periods[stream.name] = toduration(rates.get(stream.name, period))
        if periods[stream.name] <= 0:
            raise ValueError("Period of input '{}' must be positive".format(stream.name))
    moments = set()
    for step in set(periods.values()):
        for k in range(1, int(duration / step) + 1):
            moments.add(k * step)
    events = []
    for moment in sorted(moments):
        values = {}
        for stream in spec.inputs:
            if (moment / periods[stream.name]).denominator == 1:
                values[stream.name] = _draw(rng, stream.vtype, ranges.get(stream.name), biases.get(stream.name))
        events.append(Event(moment, values))
    logging.debug("Generated %d events over %ss with seed %s", len(events), format_decimal(duration), seed)
    return events

################################################################################
# Corpus
################################################################################

GPS_SPEC = """\
# Checks that the GPS sensor delivers at least 5 readings per second
input gps: (Float64, Float64)
output gps_readings: Int64 @1Hz := gps.aggregate(over: 2s, using: count)
trigger @1Hz gps_readings < 10 "GPS sensor frequency < 5Hz"
"""

ALTLAT_SPEC = """\
# Altitude and latitude bounds, checked on every input event
input alt, lat: Float64
output check_alt := alt < 3.0
output check_lat := lat > 1.0 && lat < 2.0
trigger !(check_alt && check_lat) "bounds violated"
"""

PILOTS_SPEC = """\
# In an emergency two pilots must be present, otherwise at least one
input pilots: Float64
input emergency: Bool
output check_1 @{emergency && pilots} := pilots > 0.0
output check_2 @{emergency && pilots} := pilots == 2.0
trigger if !emergency then check_1 else check_2 "pilot check"
"""

GEOFENCE_CENTER = (50.0, 50.0)
GEOFENCE_RADIUS = 40.0
GEOFENCE_PHASE = 0.1
# axis-aligned box strictly inside every geofence polygon with at least five faces
GEOFENCE_INNER_BOX = (35.0, 65.0)


def geofence_polygon(faces):
    '''Returns the (lon, lat) vertices of a regular polygon around GEOFENCE_CENTER, rounded
    to three decimals'''
    if faces < 3:
        raise ValueError("A geofence needs at least three faces")
    vertices = []
    for k in range(faces):
        angle = GEOFENCE_PHASE + 2 * math.pi * k / faces
        vertices.append((round(GEOFENCE_CENTER[0] + GEOFENCE_RADIUS * math.cos(angle), 3),
                         round(GEOFENCE_CENTER[1] + GEOFENCE_RADIUS * math.sin(angle), 3)))
    return vertices


def _geofence_constants(faces, pacing):
    lines = ["output cx {} := {}".format(pacing, format_value(GEOFENCE_CENTER[0])),
             "output cy {} := {}".format(pacing, format_value(GEOFENCE_CENTER[1]))]
    for k, (x, y) in enumerate(geofence_polygon(faces)):
        lines.append("output vx_{} {} := {}".format(k, pacing, format_value(x)))
        lines.append("output vy_{} {} := {}".format(k, pacing, format_value(y)))
    for k in range(faces):
        j = (k + 1) % faces
        lines.append("output grad_{k} := (vy_{j} - vy_{k}) / (vx_{j} - vx_{k})".format(k=k, j=j))
        lines.append("output icpt_{k} := vy_{k} - grad_{k} * vx_{k}".format(k=k))
        lines.append("output inner_{k} := cy > grad_{k} * cx + icpt_{k}".format(k=k))
    return lines


def _geofence_faces(faces):
    return ["output out_{k} := (lat > grad_{k} * lon + icpt_{k}) != inner_{k}".format(k=k) for k in range(faces)]


def geofence_spec(faces=5, variant="2d"):
    '''Returns the text of a polygonal geofence specification.

    Every face is a line through two vertices; a position is outside if it lies on the other side
    of some face than the center. Variants: 2d (outside and crossing triggers), 3d (additional
    altitude bounds, no offsets) and under (checks the faces only outside an inner box).
    '''
    outside = " || ".join("out_{}".format(k) for k in range(faces))
    if variant == "2d":
        lines = ["# Polygonal geofence with {} faces".format(faces), "input lat, lon: Float64"]
        lines += _geofence_constants(faces, "@{lat || lon}")
        lines += _geofence_faces(faces)
        for k in range(faces):
            lines.append("output cross_{k} := out_{k} && !out_{k}.offset(by: -1).defaults(to: false)".format(k=k))
        lines.append('trigger {} "outside geofence"'.format(outside))
        lines.append('trigger {} "geofence face crossed"'.format(" || ".join("cross_{}".format(k)
                                                                           for k in range(faces))))
    elif variant == "3d":
        lines = ["# Polygonal geofence with {} faces and altitude bounds".format(faces),
                 "input lat, lon, alt: Float64"]
        lines += _geofence_constants(faces, "@{lat || lon}")
        lines += ["output alt_min @{alt} := 100.0",
                  "output alt_max @{alt} := 400.0",
                  "output alt_ok := alt >= alt_min && alt <= alt_max"]
        lines += _geofence_faces(faces)
        lines.append('trigger !alt_ok || {} "outside 3D geofence"'.format(outside))
    elif variant == "under":
        low, high = (format_value(b) for b in GEOFENCE_INNER_BOX)
        lines = ["# Polygonal geofence with {} faces, skipped inside an inner box".format(faces),
                 "input lat, lon: Float64"]
        lines += _geofence_constants(faces, "@{lat || lon}")
        lines += _geofence_faces(faces)
        inside = "lat > {l} && lat < {h} && lon > {l} && lon < {h}".format(l=low, h=high)
        lines.append('trigger if {} then false else {} "outside geofence"'.format(inside, outside))
    else:
        raise ValueError("Unknown geofence variant '{}'".format(variant))
    return "\n".join(lines) + "\n"


CORPUS = {
    "gps": lambda faces: GPS_SPEC,
    "altlat": lambda faces: ALTLAT_SPEC,
    "pilots": lambda faces: PILOTS_SPEC,
    "geofence2d": lambda faces: geofence_spec(faces, "2d"),
    "geofence3d": lambda faces: geofence_spec(faces, "3d"),
    "geofence-under": lambda faces: geofence_spec(faces, "under"),
}

# Trace generator options that fit the bundled specifications
CORPUS_TRACES = {
    "gps": {"rates": {"gps": "100ms"}, "ranges": {"gps": (-90.0, 90.0)}},
    "altlat": {"rates": {"alt": "100ms", "lat": "10ms"}, "ranges": {"alt": (0.0, 5.0), "lat": (0.0, 3.0)}},
    "pilots": {"rates": {"pilots": "100ms", "emergency": "100ms"}, "ranges": {"pilots": (0, 3)},
               "biases": {"emergency": 0.2}},
    "geofence2d": {"rates": {"lat": "10ms", "lon": "10ms"}, "ranges": {"lat": (0.0, 100.0), "lon": (0.0, 100.0)}},
    "geofence3d": {"rates": {"lat": "10ms", "lon": "10ms", "alt": "100ms"},
                   "ranges": {"lat": (0.0, 100.0), "lon": (0.0, 100.0), "alt": (0.0, 500.0)}},
    "geofence-under": {"rates": {"lat": "10ms", "lon": "10ms"},
                       "ranges": {"lat": (36.0, 66.0), "lon": (36.0, 66.0)}},
}


def bundled_spec(name, faces=5):
    '''Returns the text of a bundled specification'''
    if name not in CORPUS:
        raise ValueError("Unknown corpus entry '{}', available: {}".format(name, ", ".join(sorted(CORPUS))))
    return CORPUS[name](faces)

################################################################################
# Random specifications
################################################################################

class SpecGenerator(object):
    '''Generates random well-typed specifications. Streams only access streams declared before
    them (plus offsets and holds of themselves), so the result is acyclic. Int64 arithmetic is
    limited to + and -, division and remainder by literals, so evaluations do not fault on
    generated traces.'''
    def __init__(self, rng, max_inputs=3, max_outputs=6, max_triggers=2, max_depth=3, periodic=True):
        self.rng = rng
        self.max_inputs = max_inputs
        self.max_outputs = max_outputs
        self.max_triggers = max_triggers
        self.max_depth = max_depth
        self.periodic = periodic
        self.frequencies = [Frequency(1), Frequency(2), Frequency(5), Frequency(10)]

    def generate(self):
        for _ in range(100):
            spec = self._attempt()
            try:
                ts = infer_types(spec)
                evaluation_order(build_dependency_graph(ts))
            except StreamSpecError as e:
                logging.debug("Discarding generated specification: %s", e)
                continue
            return spec
        raise RuntimeError("Could not generate a valid specification")

    def _attempt(self):
        rng = self.rng
        self.streams = []
        inputs = []
        for k in range(rng.randint(1, self.max_inputs)):
            vtype = rng.choice([INT64, FLOAT64, FLOAT64, BOOL])
            inputs.append(InputDecl("i{}".format(k), vtype))
            self.streams.append(("i{}".format(k), vtype, EventBased(AcInput("i{}".format(k)))))
        if rng.random() < 0.2:
            inputs.append(InputDecl("pos", (FLOAT64, FLOAT64)))
            self.streams.append(("pos", (FLOAT64, FLOAT64), EventBased(AcInput("pos"))))
        self.input_names = [i.name for i in inputs]
        outputs = []
        for k in range(rng.randint(1, self.max_outputs)):
            outputs.append(self._output("o{}".format(k)))
        triggers = [self._trigger() for _ in range(rng.randint(1, self.max_triggers))]
        return Spec(inputs, outputs, triggers)

    def _pacing(self):
        rng = self.rng
        choice = rng.random()
        if self.periodic and choice < 0.2:
            return Periodic(rng.choice(self.frequencies)), True
        if choice < 0.45:
            names = rng.sample(self.input_names, rng.randint(1, len(self.input_names)))
            leaves = [AcInput(n) for n in names]
            if len(leaves) == 1:
                return EventBased(leaves[0]), True
            combine = ac_all if rng.random() < 0.5 else ac_any
            return EventBased(combine(leaves)), True
        return None, False

    def _output(self, name):
        vtype = self.rng.choice([INT64, FLOAT64, FLOAT64, BOOL])
        pacing, annotated = self._pacing()
        self.context = pacing
        self.self_access = (name, vtype) if self.rng.random() < 0.3 else None
        self.synced = []
        expression = self.expr(vtype, self.max_depth)
        if pacing is None and not self.synced:
            anchor = self._sync_anchor(vtype)
            expression = anchor if anchor is not None else expression
        if pacing is None:
            conditions = [self._pacing_of(t).condition for t in self.synced]
            if not conditions:
                # nothing to infer from, fall back to an annotation
                pacing = EventBased(AcInput(self.rng.choice(self.input_names)))
                annotated = True
            else:
                pacing = EventBased(ac_all(conditions))
        self.streams.append((name, vtype, pacing))
        return OutputDecl(name, expression, pacing=pacing if annotated else None)

    def _trigger(self):
        pacing, annotated = self._pacing()
        self.context = pacing
        self.self_access = None
        self.synced = []
        condition = self.expr(BOOL, self.max_depth)
        if pacing is None and not self.synced:
            anchor = self._sync_anchor(BOOL)
            if anchor is not None:
                condition = Binary("||", condition, anchor)
            else:
                pacing, annotated = EventBased(AcInput(self.rng.choice(self.input_names))), True
        return TriggerDecl(condition, "t{}".format(self.rng.randint(0, 99)),
                           pacing=pacing if annotated else None)

    def _pacing_of(self, name):
        for stream, _, pacing in self.streams:
            if stream == name:
                return pacing
        raise KeyError(name)

    def _sync_allowed(self, pacing):
        if self.context is None:
            return not pacing.periodic
        return pacing_implies(self.context, pacing)

    def _sync_anchor(self, vtype):
        options = [(n, t) for n, t, p in self.streams if t == vtype and self._sync_allowed(p)]
        if not options:
            return None
        name, _ = self.rng.choice(options)
        self.synced.append(name)
        return Sync(name)

    def literal(self, vtype):
        rng = self.rng
        if vtype == BOOL:
            return Literal(rng.random() < 0.5, BOOL)
        if vtype == INT64:
            return Literal(rng.randint(-10, 10), INT64)
        return Literal(round(rng.uniform(-10.0, 10.0), 2), FLOAT64)

    def access(self, vtype):
        rng = self.rng
        options = []
        for name, stype, pacing in self.streams:
            if stype == vtype:
                if self._sync_allowed(pacing):
                    options.append(("sync", name))
                    if not pacing.periodic or self.context is not None:
                        options.append(("offset", name))
                options.append(("hold", name))
            if vtype == FLOAT64 and isinstance(stype, tuple) and self._sync_allowed(pacing):
                options.append(("project", name))
            if vtype == INT64:
                options.append(("count", name))
            if vtype == BOOL and stype == BOOL:
                options.append(("exists", name))
            if vtype == FLOAT64 and stype == FLOAT64:
                options.append(("aggregate", name))
        if self.self_access is not None and self.self_access[1] == vtype:
            options.append(("self", self.self_access[0]))
        if not options:
            return self.literal(vtype)
        kind, name = rng.choice(options)
        duration = rng.choice([Fraction(1, 2), Fraction(1), Fraction(2)])
        if kind == "sync":
            self.synced.append(name)
            return Sync(name)
        if kind == "offset":
            self.synced.append(name)
            return Sync(name, -rng.randint(1, 2), self.literal(vtype))
        if kind == "self":
            return Sync(name, -1, self.literal(vtype))
        if kind == "hold":
            return Hold(name, self.literal(vtype))
        if kind == "project":
            self.synced.append(name)
            return TupleProj(Sync(name), rng.randint(0, 1))
        if kind == "count":
            return Window(name, duration, "count")
        if kind == "exists":
            return Window(name, duration, "exists")
        aggregation = rng.choice(["sum", "avg", "min", "max"])
        default = self.literal(FLOAT64) if aggregation in DEFAULTED_AGGREGATIONS else None
        return Window(name, duration, aggregation, default)

    def expr(self, vtype, depth):
        rng = self.rng
        if depth <= 0 or rng.random() < 0.25:
            return self.access(vtype) if rng.random() < 0.75 else self.literal(vtype)
        choice = rng.random()
        if choice < 0.15:
            return Ite(self.expr(BOOL, depth - 1), self.expr(vtype, depth - 1), self.expr(vtype, depth - 1))
        if vtype == BOOL:
            if choice < 0.4:
                op = rng.choice(LOGICAL_OPS)
                return Binary(op, self.expr(BOOL, depth - 1), self.expr(BOOL, depth - 1))
            if choice < 0.5:
                return Unary("not", self.expr(BOOL, depth - 1))
            operand = rng.choice([INT64, FLOAT64])
            op = rng.choice(ORDERING_OPS + EQUALITY_OPS)
            return Binary(op, self.expr(operand, depth - 1), self.expr(operand, depth - 1))
        if vtype == INT64:
            if choice < 0.7:
                op = rng.choice(["+", "-"])
                return Binary(op, self.expr(INT64, depth - 1), self.expr(INT64, depth - 1))
            op = rng.choice(["/", "%"])
            return Binary(op, self.expr(INT64, depth - 1), Literal(rng.choice([2, 3, 5, -2, 7]), INT64))
        if choice < 0.8:
            op = rng.choice(ARITHMETIC_OPS)
            return Binary(op, self.expr(FLOAT64, depth - 1), self.expr(FLOAT64, depth - 1))
        return Unary("neg", self.expr(FLOAT64, depth - 1))


def random_spec(rng, **kwargs):
    '''Returns a random well-typed Spec, see SpecGenerator for the options'''
    return SpecGenerator(rng, **kwargs).generate()


def random_trace_options(spec, rng):
    '''Returns trace generator options giving each input of a random specification its own rate'''
    rates = {}
    for stream in spec.inputs:
        rates[stream.name] = rng.choice(["10ms", "20ms", "50ms", "100ms"])
    return {"rates": rates, "ranges": dict((i.name, (-20, 20)) for i in spec.inputs
                                           if i.vtype in (INT64, FLOAT64))}

################################################################################
# Equivalence harness and benchmark
################################################################################

def observe(ts, events, end=None):
    '''Runs ts and returns (observations, fault time or None, stats or None)'''
    try:
        observations, stats = run(ts, events, end)
    except RuntimeFault as e:
        logging.debug("Evaluation faulted: %s", e)
        return e.observations, e.time, None
    return observations, None, stats


def first_divergence(reference, candidate):
    '''Compares two observe() results. Observations at or after a fault of the reference are not
    compared; a candidate faulting earlier than the reference diverges.

    :returns: (index, time) of the first divergence or None
    '''
    obs_a, fault_a = reference[0], reference[1]
    obs_b, fault_b = candidate[0], candidate[1]
    if fault_a is not None:
        obs_a = [o for o in obs_a if o.time < fault_a]
        obs_b = [o for o in obs_b if o.time < fault_a]
    common = min(len(obs_a), len(obs_b))
    for index in range(common):
        if obs_a[index] != obs_b[index]:
            return index, min(obs_a[index].time, obs_b[index].time)
    if fault_b is not None and (fault_a is None or fault_b < fault_a):
        return common, fault_b
    if len(obs_a) != len(obs_b):
        extra = obs_a[common] if len(obs_a) > common else obs_b[common]
        return common, extra.time
    return None


class EquivalenceVerdict(ReportGroup):
    '''Outcome of the equivalence harness. Every failure names variant, seed, the first diverging
    observation and a counterexample trace cut after the divergence.'''
    def __init__(self, name="equivalence"):
        super(EquivalenceVerdict, self).__init__(name)
        self.failures = []
        self.skipped = []
        self._data["traces"] = 0
        self._data["comparisons"] = 0
        self._data["divergences"] = 0

    @property
    def ok(self):
        return not self.failures

    def add_failure(self, variant, seed, index, moment, counterexample, inputs, spec_text=None):
        self.failures.append({"variant": variant, "seed": seed, "index": index, "time": moment,
                              "counterexample": counterexample, "inputs": inputs, "spec": spec_text})
        self._data["divergences"] += 1

    def get(self, meta=False):
        out = super(EquivalenceVerdict, self).get(meta=meta)
        out["equivalent"] = self.ok
        out["failures"] = [{"variant": f["variant"], "seed": f["seed"], "index": f["index"],
                            "time": format_decimal(f["time"]), "events": len(f["counterexample"])}
                           for f in self.failures]
        out["skipped"] = list(self.skipped)
        return out


def pass_variants(ts, passes=DEFAULT_PASSES, max_rounds=DEFAULT_MAX_ROUNDS):
    '''Returns [(name, TypedSpec)]: every pass alone, then the whole pipeline if more than one
    pass is given. Passes that fail are logged and left out.'''
    selected = resolve_passes(passes)
    variants = []
    skipped = []
    for name, function in selected:
        try:
            variants.append((name, function(ts)[0]))
        except StreamSpecError as e:
            logging.warning("Pass %s failed: %s", name, e)
            skipped.append("{}: {}".format(name, e))
    if len(selected) > 1:
        try:
            variants.append(("pipeline", run_pipeline(ts, [f for _, f in selected], max_rounds)[0]))
        except StreamSpecError as e:
            logging.warning("Pipeline failed: %s", e)
            skipped.append("pipeline: {}".format(e))
    return variants, skipped


def equivalence_harness(spec, passes=DEFAULT_PASSES, seeds=DEFAULT_HARNESS_SEEDS,
                        duration=DEFAULT_HARNESS_DURATION, rates=None, ranges=None, biases=None,
                        max_rounds=DEFAULT_MAX_ROUNDS, verdict=None):
    '''Differential test: evaluates the specification and every pass variant on generated
    traces and compares the observations.

    :param spec: Spec or TypedSpec
    :param passes: pass list (names or callables)
    :param seeds: number of seeds or list of seeds
    :param verdict: existing EquivalenceVerdict to add to

    :returns: verdict with all divergences
    :rtype: EquivalenceVerdict
    '''
    ts = spec if isinstance(spec, TypedSpec) else infer_types(spec)
    verdict = verdict if verdict is not None else EquivalenceVerdict()
    variants, skipped = pass_variants(ts, passes, max_rounds)
    verdict.skipped.extend(skipped)
    if isinstance(seeds, int):
        seeds = range(seeds)
    for seed in seeds:
        events = generate_trace(ts, duration, seed, rates, ranges, biases)
        verdict["traces"] += 1
        reference = observe(ts, events)
        for name, variant in variants:
            verdict["comparisons"] += 1
            divergence = first_divergence(reference, observe(variant, events))
            if divergence is None:
                continue
            index, moment = divergence
            logging.warning("Variant %s diverges on seed %s at time %s", name, seed, format_decimal(moment))
            counterexample = [e for e in events if e.time <= moment]
            verdict.add_failure(name, seed, index, moment, counterexample, ts.inputs, pretty(variant))
    return verdict


class BenchReport(ReportGroup):
    '''Benchmark of the original specification against its pass variants on one trace'''
    def __init__(self, inputs=(), name="bench"):
        super(BenchReport, self).__init__(name)
        self.inputs = list(inputs)
        self._data["equivalent"] = True

    def add_variant(self, name, streams, observations, stats, times, equivalent):
        variant = ReportGroup(name)
        variant["streams"] = streams
        variant["observations"] = observations
        variant["cycles"] = stats.cycle_count
        variant["total_evaluations"] = stats.total_evaluations(self.inputs)
        variant["median_wall_time_ns"] = int(statistics.median(times))
        variant["equivalent"] = equivalent
        self._instances.append(variant)
        if not equivalent:
            self._data["equivalent"] = False
        return variant

    def variant(self, name):
        for inst in self._instances:
            if inst.name == name:
                return inst
        raise KeyError(name)


def bench(ts, events, passes=DEFAULT_PASSES, repeat=DEFAULT_REPEAT, max_rounds=DEFAULT_MAX_ROUNDS, end=None):
    '''Runs the original and every pass variant repeat times on the same trace.

    :raises: :class:`RuntimeFault`: the original specification faults on the trace
    '''
    if repeat < 1:
        raise ValueError("repeat must be at least 1")
    report = BenchReport([s.name for s in ts.inputs])
    variants, skipped = pass_variants(ts, passes, max_rounds)
    if skipped:
        raise PassError("; ".join(skipped))
    reference = None
    for name, variant in [("original", ts)] + variants:
        times = []
        result = None
        for _ in range(repeat):
            result = observe(variant, events, end)
            if result[1] is not None:
                if name == "original":
                    raise RuntimeFault("original", result[1], "evaluation faulted", result[0])
                break
            times.append(result[2].wall_time_ns)
        if reference is None:
            reference = result
        if result[1] is not None:
            report.add_variant(name, len(variant.outputs), len(result[0]), EvalStats(), [0], False)
            continue
        equivalent = first_divergence(reference, result) is None
        report.add_variant(name, len(variant.outputs), len(result[0]), result[2], times, equivalent)
    return report

################################################################################
# Command line interface
################################################################################

def format_types(ts):
    '''Returns one line per stream with value type and pacing, inferred pacings are marked'''
    lines = []
    for stream in ts.streams():
        line = "{} {}: {} {}".format(stream.kind, stream.name, format_type(stream.vtype), stream.pacing)
        if stream.kind == "trigger":
            line = "{}: {} {}".format(stream.name, format_type(stream.vtype), stream.pacing)
        if stream.kind != "input" and stream.provenance == "inferred":
            line += " (inferred)"
        if stream.filter is not None:
            line += " {{ filter {} }}".format(pretty_expr(stream.filter))
        if stream.message is not None:
            line += " " + _format_message(stream.message)
        lines.append(line)
    return "\n".join(lines) + "\n"


def load_spec(filename):
    '''Reads, parses and type checks a specification file'''
    text = read_text(filename)
    try:
        return infer_types(parse_spec(text))
    except StreamSpecError as e:
        raise StreamSpecError("{}: {}".format(filename, e))


def _write(text, filename, out):
    if filename:
        with open(filename, "w", encoding=ENCODING) as outfp:
            outfp.write(text)
    else:
        out.write(text)


def cmd_check(config, out):
    ts = load_spec(config["spec"])
    if config["materialize"]:
        out.write(pretty(ts.to_spec(materialize=True)))
    else:
        out.write(format_types(ts))
    return EXIT_OK


def cmd_optimize(config, out):
    ts = load_spec(config["spec"])
    result, report = run_pipeline(ts, config["passes"], config["max_rounds"])
    reporttext = report.get_json() + "\n" if config["json"] else report.get_text()
    if config["emit"] in ("spec", "both"):
        _write(pretty(result), config["output"], out)
    if config["emit"] in ("report", "both"):
        out.write(reporttext)
    return EXIT_OK


def cmd_run(config, out):
    ts = load_spec(config["spec"])
    events = read_trace(config["trace"], ts)
    end = toduration(config["end"]) if config["end"] is not None else None
    try:
        observations, stats = run(ts, events, end)
    except RuntimeFault as e:
        for observation in e.observations:
            out.write(observation.format() + "\n")
        raise
    if config["json"]:
        document = {"observations": [{"time": format_decimal(o.time), "trigger": o.trigger, "message": o.message}
                                     for o in observations]}
        out.write(json.dumps(document, indent=4) + "\n")
    else:
        for observation in observations:
            out.write(observation.format() + "\n")
    if config["stats"]:
        statstext = stats.get_json() + "\n" if config["json"] else stats.get_text()
        with open(config["stats"], "w", encoding=ENCODING) as statsfp:
            statsfp.write(statstext)
        logging.info("Evaluation statistics written to %s", config["stats"])
    return EXIT_OK


def cmd_bench(config, out):
    ts = load_spec(config["spec"])
    events = read_trace(config["trace"], ts)
    report = bench(ts, events, config["passes"], config["repeat"], config["max_rounds"])
    out.write(report.get_json() + "\n" if config["json"] else report.get_text())
    return EXIT_OK if report["equivalent"] else EXIT_INEQUIVALENT


def cmd_gen_trace(config, out):
    spec = parse_spec(read_text(config["spec"]))
    duration = config["trace_duration"] or config["duration"]
    events = generate_trace(spec, duration, config["seed"], config["rates"], config["ranges"],
                            config["biases"], config["period"])
    if config["output"]:
        with open(config["output"], "w", encoding=ENCODING) as outfp:
            write_trace(events, outfp, spec)
    else:
        write_trace(events, out, spec)
    return EXIT_OK


def cmd_equiv(config, out):
    verdict = EquivalenceVerdict()
    duration = config["trace_duration"] or config["harness_duration"]
    seeds = range(config["seed"], config["seed"] + config["harness_seeds"])
    if config["random"]:
        for index in range(config["random"]):
            rng = random.Random("{}-{}".format(config["seed"], index))
            spec = random_spec(rng)
            options = random_trace_options(spec, rng)
            before = len(verdict.failures)
            equivalence_harness(spec, config["passes"], seeds, duration, options["rates"], options["ranges"],
                                max_rounds=config["max_rounds"], verdict=verdict)
            for failure in verdict.failures[before:]:
                failure["original"] = pretty(spec)
    else:
        if not config["spec"]:
            raise ValueError("equiv needs a specification file or --random")
        ts = load_spec(config["spec"])
        equivalence_harness(ts, config["passes"], seeds, duration, config["rates"], config["ranges"],
                            config["biases"], config["max_rounds"], verdict=verdict)
    if config["json"]:
        out.write(verdict.get_json() + "\n")
    else:
        out.write(verdict.get_text())
        for failure in verdict.failures:
            out.write("# divergence of {} on seed {} at time {}\n".format(
                failure["variant"], failure["seed"], format_decimal(failure["time"])))
            if failure.get("original"):
                out.write("# original specification:\n")
                out.write("".join("#   {}\n".format(l) for l in failure["original"].splitlines()))
            for event in failure["counterexample"]:
                out.write(format_event(event, failure["inputs"]) + "\n")
    return EXIT_OK if verdict.ok else EXIT_INEQUIVALENT


def cmd_corpus(config, out):
    _write(bundled_spec(config["name"], config["faces"]), config["output"], out)
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "optimize": cmd_optimize,
    "run": cmd_run,
    "bench": cmd_bench,
    "gen-trace": cmd_gen_trace,
    "equiv": cmd_equiv,
    "corpus": cmd_corpus,
}


class _ArgumentParser(argparse.ArgumentParser):
    # usage errors exit with EXIT_ERROR, exit code 2 is reserved for inequivalence
    def error(self, message):
        raise ValueError("{}: {}".format(self.prog, message))


def _assignments(values, convert, what):
    out = {}
    for item in values or []:
        if "=" not in item:
            raise ValueError("Invalid {} '{}', expected NAME=VALUE".format(what, item))
        names, value = item.split("=", 1)
        value = convert(value)
        for name in names.split(","):
            out[name.strip()] = value
    return out


def _bias(value):
    bias = float(value)
    if bias < 0.0 or bias > 1.0:
        raise ValueError("Invalid bias {}, expected a probability".format(value))
    return bias


def _period(value):
    toduration(value)
    return value


def read_cli(cliargs):
    # Create CLI parser
    desc = 'Optimizes and evaluates stream-based runtime monitoring specifications'
    parser = _ArgumentParser(prog="streamopt", description=desc)
    parser.add_argument('--version', action='version', version='%(prog)s {}'.format(STREAMOPT_VERSION))
    parser.add_argument('--configfile', help='Location of configuration file', default=None)
    parser.add_argument('--log', dest='loglevel', help='Loglevel (info, debug, warning, error)', default=None)
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True

    check = subparsers.add_parser('check', help='parse and type check, print stream types')
    check.add_argument('spec', help='specification file')
    check.add_argument('--materialize', action='store_true', default=False,
                       help='print the specification with all pacings annotated')

    optimize = subparsers.add_parser('optimize', help='apply optimization passes')
    optimize.add_argument('spec', help='specification file')
    optimize.add_argument('--passes', default=None,
                          help='comma separated passes: all, sccp, fold, dse, cse, ptr, fr (default: all)')
    optimize.add_argument('--max-rounds', dest='max_rounds', type=int, default=None,
                          help='maximal number of pipeline rounds')
    optimize.add_argument('--emit', choices=['spec', 'report', 'both'], default='both',
                          help='what to print (default: both)')
    optimize.add_argument('-j', '--json', action='store_true', default=False, help='report as JSON')
    optimize.add_argument('-o', '--output', default=None, help='save specification to file (default: stdout)')

    runp = subparsers.add_parser('run', help='evaluate a specification over a trace')
    runp.add_argument('spec', help='specification file')
    runp.add_argument('trace', help='trace file (JSON lines)')
    runp.add_argument('--stats', default=None, metavar='FILE', help='write evaluation statistics to file')
    runp.add_argument('-j', '--json', action='store_true', default=False, help='print JSON')
    runp.add_argument('--end', default=None, help='evaluate periodic streams up to this time')

    benchp = subparsers.add_parser('bench', help='compare original and optimized specification on a trace')
    benchp.add_argument('spec', help='specification file')
    benchp.add_argument('trace', help='trace file (JSON lines)')
    benchp.add_argument('--passes', default=None, help='comma separated passes (default: all)')
    benchp.add_argument('--max-rounds', dest='max_rounds', type=int, default=None)
    benchp.add_argument('--repeat', type=int, default=None, help='runs per variant')
    benchp.add_argument('-j', '--json', action='store_true', default=False, help='report as JSON')

    gen = subparsers.add_parser('gen-trace', help='generate a random trace')
    gen.add_argument('--spec', required=True, help='specification file')
    gen.add_argument('--duration', dest='trace_duration', default=None, help='trace length (e.g. 10s)')
    gen.add_argument('--seed', type=int, default=None, help='random seed')
    gen.add_argument('--rate', dest='rate', action='append', default=None,
                     help='NAME[,NAME...]=PERIOD, e.g. lat,lon=10ms')
    gen.add_argument('--range', dest='range', action='append', default=None, help='NAME=LOW:HIGH')
    gen.add_argument('--bias', dest='bias', action='append', default=None, help='NAME=PROBABILITY')
    gen.add_argument('-o', '--out', '--output', dest='output', default=None, help='save to file (default: stdout)')

    equiv = subparsers.add_parser('equiv', help='differential test of passes on generated traces')
    equiv.add_argument('spec', nargs='?', default=None, help='specification file')
    equiv.add_argument('--random', type=int, default=0, help='test this many random specifications')
    equiv.add_argument('--passes', default=None, help='comma separated passes (default: all)')
    equiv.add_argument('--max-rounds', dest='max_rounds', type=int, default=None)
    equiv.add_argument('--seeds', dest='harness_seeds', type=int, default=None, help='traces per specification')
    equiv.add_argument('--seed', type=int, default=None, help='first seed')
    equiv.add_argument('--duration', dest='trace_duration', default=None, help='trace length')
    equiv.add_argument('--rate', dest='rate', action='append', default=None, help='NAME[,NAME...]=PERIOD')
    equiv.add_argument('--range', dest='range', action='append', default=None, help='NAME=LOW:HIGH')
    equiv.add_argument('--bias', dest='bias', action='append', default=None, help='NAME=PROBABILITY')
    equiv.add_argument('-j', '--json', action='store_true', default=False, help='report as JSON')

    corpus = subparsers.add_parser('corpus', help='print a bundled specification')
    corpus.add_argument('name', choices=sorted(CORPUS), help='corpus entry')
    corpus.add_argument('--faces', type=int, default=5, help='geofence faces (default: 5)')
    corpus.add_argument('-o', '--output', default=None, help='save to file (default: stdout)')

    pargs = vars(parser.parse_args(cliargs))

    # Check if input files exist and are readable
    for key, what in (("spec", "Specification file"), ("trace", "Trace file"),
                      ("configfile", "Configuration file")):
        if pargs.get(key) is not None:
            if not pexists(pargs[key]):
                raise ValueError("{} '{}' does not exist".format(what, pargs[key]))
            if not os.access(pargs[key], os.R_OK):
                raise ValueError("{} '{}' is not readable".format(what, pargs[key]))
    if pargs.get("end") is not None:
        toduration(pargs["end"])
    if pargs.get("trace_duration") is not None:
        toduration(pargs["trace_duration"])
    for key in ("max_rounds", "repeat", "harness_seeds"):
        if pargs.get(key) is not None and pargs[key] < 1:
            raise ValueError("--{} must be at least 1".format(key.replace("_", "-")))
    if pargs.get("faces") is not None and pargs["faces"] < 3:
        raise ValueError("--faces must be at least 3")
    pargs["rates"] = _assignments(pargs.pop("rate", None), _period, "rate") or None
    pargs["ranges"] = _assignments(pargs.pop("range", None), torange, "range") or None
    pargs["biases"] = _assignments(pargs.pop("bias", None), _bias, "bias") or None
    if pargs["loglevel"]:
        numeric_level = getattr(logging, pargs["loglevel"].upper(), None)
        if not isinstance(numeric_level, int):
            raise ValueError('Invalid log level: {}'.format(pargs["loglevel"]))
    return pargs


def read_config(config={"command": None}):
    '''Merges defaults, the first configuration file found and the command line arguments.
    Configuration files are JSON objects, searched in $PWD/.streamopt, $HOME/.streamopt and
    /etc/streamopt.conf unless --configfile names one.'''
    configdict = {"passes": DEFAULT_PASSES,
                  "max_rounds": DEFAULT_MAX_ROUNDS,
                  "repeat": DEFAULT_REPEAT,
                  "seed": DEFAULT_SEED,
                  "duration": DEFAULT_DURATION,
                  "period": DEFAULT_PERIOD,
                  "harness_seeds": DEFAULT_HARNESS_SEEDS,
                  "harness_duration": DEFAULT_HARNESS_DURATION,
                  "rates": {},
                  "ranges": {},
                  "biases": {},
                  "loglevel": DEFAULT_LOGLEVEL,
                 }
    searchfiles = []

    userfile = config.get("configfile", None)
    if userfile is not None:
        searchfiles.append(userfile)
    else:
        searchfiles = [pjoin(os.getcwd(), CONFIG_FILENAME)]
        if "HOME" in os.environ:
            searchfiles.append(pjoin(os.environ["HOME"], CONFIG_FILENAME))
        searchfiles.append(SYSTEM_CONFIG_FILE)
    for sfile in searchfiles:
        if pexists(sfile):
            sfp = fopen(sfile)
            if sfp:
                sstr = sfp.read()
                sfp.close()
                if len(sstr) > 0:
                    try:
                        tmpdict = json.loads(sstr)
                    except ValueError:
                        raise ValueError("Configuration file '{}' not valid JSON".format(sfile))
                    if not isinstance(tmpdict, dict):
                        raise ValueError("Configuration file '{}' must contain a JSON object".format(sfile))
                    for key in tmpdict:
                        if key not in configdict:
                            logging.warning("Unknown key '%s' in configuration file %s", key, sfile)
                    configdict.update(tmpdict)
                    for key in ("ranges",):
                        configdict[key] = dict((k, tuple(v)) for k, v in configdict[key].items())
                logging.debug("Read configuration file %s", sfile)
                break

    for key, value in config.items():
        if value is None and key in configdict:
            continue
        if key in ("rates", "ranges", "biases"):
            merged = dict(configdict.get(key, {}))
            merged.update(value)
            configdict[key] = merged
        else:
            configdict[key] = value

    if configdict["loglevel"]:
        numeric_level = getattr(logging, configdict["loglevel"].upper(), None)
        if not isinstance(numeric_level, int):
            raise ValueError('Invalid log level: {}'.format(configdict["loglevel"]))
        logging.basicConfig(level=numeric_level)

    return configdict


def run_cli(cliargs, out=None):
    '''Runs one command and returns the exit code'''
    out = out or sys.stdout
    try:
        # Read command line arguments
        pargs = read_cli(cliargs)
        # Read configuration from configuration file
        config = read_config(pargs)
    except Exception as e:
        print(e, file=sys.stderr)
        return EXIT_ERROR
    try:
        return COMMANDS[config["command"]](config, out)
    except RuntimeFault as e:
        print(e, file=sys.stderr)
        return EXIT_FAULT
    except (StreamSpecError, ValueError, OSError) as e:
        print(e, file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run_cli(sys.argv[1:]))

__main__ = main
if __name__ == "__main__":
    main()
