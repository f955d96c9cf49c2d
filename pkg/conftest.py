# makes streamopt.py importable for tests collected from tests/
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
