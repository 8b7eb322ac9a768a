"""Loss-tolerant federated learning simulator.

Threshold-biased versus full-participation client selection, packetized
uploads with stochastic loss, zero-fill plus compensation aggregation, and
the FedAvg / q-FedAvg / pFedMe integrations.
"""

__version__ = "0.1.0"
