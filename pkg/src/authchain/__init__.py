"""Permissioned proof-of-authority ledger with a learned access-control engine.

Subpackages are layered bottom-up: ``crypto`` (primitives), ``model``
(decision network), ``ledger`` (transactions, blocks, chain memory),
``contracts`` (authentication/authorization and priority rules),
``storage`` (resources, access links, malicious-activity log),
``harness`` (simulated world and scenarios), ``bench`` (reference
RBAC/ABAC checkers and timing), ``cli`` (operator surface).
"""

__version__ = "0.1.0"
