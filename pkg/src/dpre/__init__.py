"""Predictive pre-allocation of uplink resource blocks for event-triggered sensor traffic.

Two cooperating stages: a slow loop that mines node-to-node trigger
correlation from access history (multinomial Naive Bayes over access
windows), and a fast per-TTI loop that turns the mined reservation sets
into concrete RB pre-allocations with an adversarial-bandit strategy.
"""

__version__ = "0.1.0"
