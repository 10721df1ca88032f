"""freshnet: a multi-chain consortium for inter-organization supply chains.

Each organization runs a permissioned parachain with supply-chain and
access-control runtime pallets.  A relay chain registers parachains,
validates their blocks, finalizes history with supermajority votes, and
routes cross-chain messages under ordered / provenance-checked / fair
delivery guarantees.  A deterministic discrete-event simulator, a
websocket node service, and an operator CLI sit on top.
"""

__version__ = "0.1.0"
