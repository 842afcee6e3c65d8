"""Consultation-navigation engine.

Learns clinically consistent next-symptom inquiry policies from recorded
symptom sequences (behavior cloning + offline RL over an information-gain
reward), coordinates inquiry selection with a pluggable core dialogue model,
and evaluates consultations with closed-form metrics.
"""

__version__ = "0.1.0"
