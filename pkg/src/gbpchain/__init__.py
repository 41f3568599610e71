"""Cross-organization group-based access control over a simulated permissioned ledger."""
