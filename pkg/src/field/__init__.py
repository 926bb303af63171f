from field.pulse import (
    ENVELOPES,
    Envelope,
    Pulse,
    TriangularEnvelope,
    electric_field,
    register_envelope,
    vector_potential,
    write_field_samples,
)

__all__ = [
    "ENVELOPES",
    "Envelope",
    "Pulse",
    "TriangularEnvelope",
    "electric_field",
    "register_envelope",
    "vector_potential",
    "write_field_samples",
]
