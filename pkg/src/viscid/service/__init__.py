"""HTTP service exposing simulation sessions; see :mod:`viscid.service.app`."""
