# Copyright (c) 2026 kinverify contributors
# Licensed under the Apache License 2.0.

"""Tri-subject kinship verification.

Bilinear similarity models (SBM / ABM / RSBM), trace-norm regularized
logistic solvers, spatially voted patch selection and the evaluation
helpers, exposed from the C++ core.
"""

try:
    from ._kinverify import *  # noqa: F401,F403
    from ._kinverify import __doc__ as _core_doc  # noqa: F401
except ImportError:  # running against a build tree on PYTHONPATH
    from _kinverify import *  # noqa: F401,F403

__version__ = "0.1.0"
