"""Monte-Carlo simulator of repeated ancilla-mediated stabilizer readout and
real-time feedback on a two-data-qubit plus one-ancilla trapped-ion register."""

__version__ = "0.1.0"
