"""Money-request game toolkit: games, equilibria, agents, optimization and inference."""
