#!/usr/bin/env python3
"""
Setup script for OLAT Relight
"""

from setuptools import setup, find_packages

setup(
    name="olat-relight",
    version="0.1.0",
    description="OLAT reflectance-field relighting library and command-line tool",
    packages=find_packages(exclude=["tests", "tests.*"]),
    entry_points={
        "console_scripts": [
            "olat-relight=olat_relight.cli:main",
        ],
    },
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.7",
        "Pillow>=8.0",
        "PyYAML>=6.0",
        "colorama>=0.4.4",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Multimedia :: Graphics",
    ],
    python_requires=">=3.8",
)
