"""Joint contract design and dynamic network pricing for federated-learning markets."""
