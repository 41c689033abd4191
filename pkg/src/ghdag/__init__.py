"""Learning GHD DAG models from count data by moments ratio scoring."""
