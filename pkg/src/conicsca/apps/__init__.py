"""Wireless design problems posed as :class:`conicsca.sca.ScaProblem` instances."""
