"""gfcx: exchange personal contact cards through short self-assigned codes.

A user binds a 2..6 character code to a verified phone number, prepares one
or more profile documents, and any peer who enters that code receives the
designated profile automatically, point-to-point or broadcast to a whole
room. Transports are simulated in process, deterministically, from a seed.
"""

__version__ = "0.1.0"
