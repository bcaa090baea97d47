# Shared utilities: structured logging
