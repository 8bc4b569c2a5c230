"""Figure generation for chaoslab experiment outputs.

Consumes the experiment harness's file interfaces only: the concentration
records CSV, the rate-fit JSON, and the marginal-KL sweep CSV.  Produces
deterministic images (fixed style, no timestamps), so repeated runs on the
same inputs are byte-identical.
"""

from .figures import FigureSpec, render

__version__ = "0.1.0"
