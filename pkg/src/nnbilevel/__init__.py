"""Bilevel optimisation with trained ReLU surrogates of the lower level.

Modules: ``lp`` (simplex), ``milp`` (branch and bound), ``neural`` (training),
``encoding`` (big-M ReLU and linking blocks), ``dynopt`` (batch reactor
optimal control), ``stn`` (event-based scheduling MILP), ``pipeline``
(toy problem, Case 1 driver, feasibility cut, reports), ``gantt`` and ``cli``.
"""

__version__ = "0.1.0"
