"""Multi-operator energy-infrastructure sharing simulator.

Subpackages and modules:

- ``domain``: network topology, time grid, energy-flow bookkeeping.
- ``battery``: shared-battery SoC/SoH dynamics and discharge budgets.
- ``forecast``: federated LSTM demand forecasting.
- ``scheduler``: per-window grid/battery source selection (exact knapsack).
- ``cost``: CAPEX/OPEX attribution and total-cost-of-ownership ledgers.
- ``ingest``: synthetic corpus generation and CSV ingestion.
- ``orchestrator``: the collect/predict/decide/switch/monitor control loop.
- ``cli``: command-line entry point.
"""

__version__ = "0.1.0"
