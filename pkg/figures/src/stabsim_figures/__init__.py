"""Figure scripts for stabsim run outputs.

Everything plotted is read from the CSV columns the simulator wrote; no
probability is recomputed here.
"""

__version__ = "0.1.0"
