"""Forward-Douglas-Rachford splitting laboratory."""
