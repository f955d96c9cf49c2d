#!/usr/bin/env python3

from setuptools import setup
import re

long_description='''Optimizer and interpreter for stream-based runtime monitoring specifications.
StreamOpt parses and type checks specifications with value and pacing types, applies
specification level optimizations (constant propagation, dead stream elimination, common
subexpression elimination, pacing type refinement and filter refinement) and evaluates
specifications over timestamped traces. A differential harness checks that every optimization
preserves the trigger observations on generated traces.
'''

def find_version():
    with open("streamopt.py") as sofp:
        lines = sofp.read().split("\n")
        for line in lines:
            mat = re.search(r"^STREAMOPT_VERSION = ['\"]([^'\"]*)['\"]", line)
            if mat:
                return mat.group(1)

setup(name='StreamOpt',
    version=find_version(),

    description='Optimize and evaluate stream-based runtime monitoring specifications',
    long_description=long_description,

    # License
    license='GPLv3',
    py_modules=['streamopt'],
    python_requires='>=3.7',
    entry_points = {
        'console_scripts': ['streamopt=streamopt:main'],
    },

    # See https://pypi.python.org/pypi?%3Aaction=list_classifiers
    classifiers=[
        'Development Status :: 3 - Alpha',

        'Intended Audience :: Science/Research',
        'Intended Audience :: Developers',

        'License :: OSI Approved :: GNU General Public License v3 or later (GPLv3+)',

        'Topic :: Software Development :: Compilers',
        'Topic :: Software Development :: Testing',
        'Topic :: Scientific/Engineering',

        'Environment :: Console',

        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.7',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
    ],

    keywords='runtime verification, stream specification, monitoring, compiler optimization'
)
