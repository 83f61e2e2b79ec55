"""Shared test helpers: mock gateways and probability-table scripting."""

from __future__ import annotations

from rationalekit.backends import BackendRole, Gateway, MockTransport, Role

UNIT_ENDPOINT = "mock://unit"


def mock_gateway(
    fixture: dict, endpoint: str = UNIT_ENDPOINT
) -> tuple[Gateway, MockTransport]:
    transport = MockTransport(fixture)
    return Gateway(transports={endpoint: transport}), transport


def multi_gateway(fixtures: dict[str, dict]) -> tuple[Gateway, dict[str, MockTransport]]:
    """One mock transport per endpoint name ('mock://<name>')."""
    transports = {f"mock://{name}": MockTransport(fx) for name, fx in fixtures.items()}
    return Gateway(transports=dict(transports)), {
        name: transports[f"mock://{name}"] for name in fixtures
    }


def bind(role: Role, endpoint: str = UNIT_ENDPOINT, model: str = "mock-model") -> BackendRole:
    return BackendRole(role=role, endpoint=endpoint, model_id=model)


def normalize(text: str) -> str:
    return " ".join(text.split())


def script_continuation(
    token_probs: dict[str, dict[str, float]], prefix: str, continuation: str, prob: float
) -> None:
    """Assign `prob` to each whitespace token of `continuation` given the
    running context, mirroring how the mock backend looks probabilities up.
    Existing entries win, so script preferred candidates first."""
    context = normalize(prefix)
    for token in continuation.split():
        token_probs.setdefault(context, {}).setdefault(token, prob)
        context = f"{context} {token}".strip()
