#!/usr/bin/env python

from setuptools import setup
setup(
    name="sats",
    version="0.1.0",
    package_dir = {'': 'lib'},
    py_modules = [
        'sats',
        'sats.field',
        'sats.record',
        'sats.schema',
        'sats.core',
        'sats.source',
        'sats.ingest',
        'sats.builder',
        'sats.aggregate',
        'sats.query',
        'sats.stats',
        'sats.render',
        'sats.synth',
        'sats.cli',
        'sats.unittest'
    ],
    install_requires=[
        'numpy>=1.17',
        'scipy>=1.4',
        'Pillow>=7.0'
    ],
    entry_points={
        'console_scripts': [
            'sats=sats.cli:main'
        ]
    }
)
