from typing import Dict, List

from poisson_saturation._errors import SceneError

_SO3 = '''\
[poisson]
dim = 3
variables = x y z
domain = -3 3, -3 3, -3 3
entries =
    1 2 "z"
    2 3 "x"
    3 1 "y"
'''

FIXTURES: Dict[str, str] = {
    'so3-plane': '''\
# Lie-Poisson structure of so(3)* and the plane z = 0.
# TX^perp = span(x, y, 0) has rank 1 off the origin and rank 0 at it, so X is not regular.
[scene]
name = so3-plane
seed = 0
description = plane through the origin of so(3)*; not regular at the origin

''' + _SO3 + '''
[submanifold]
params = u v
components = "u" "v" "0"
domain = -1 1, -1 1
grid = 5
''',

    'logsympl-axis': '''\
# Log-symplectic structure x d/dx ^ d/dy on the plane and the x-axis.
# TX^perp = span(x, 0) vanishes exactly on the singular line x = 0.
[scene]
name = logsympl-axis
seed = 0
description = x-axis of a log-symplectic plane; not regular at the origin

[poisson]
dim = 2
variables = x y
domain = -2 2, -2 2
entries =
    1 2 "x"

[submanifold]
params = u
components = "u" "0"
domain = -1 1
grid = 5
''',

    'cubic-graph': '''\
# Constant structure d/dx ^ d/dy on R^3 and the graph z = x^3.
# TX^perp = span(0, 3x^2, 0) drops to rank 0 along the line (0, y, 0).
[scene]
name = cubic-graph
seed = 0
description = graph of z = x^3; not regular along x = 0

[poisson]
dim = 3
variables = x y z
domain = -2 2, -2 2, -2 2
entries =
    1 2 "1"

[submanifold]
params = u v
components = "u" "v" "u^3"
domain = -1 1, -1 1
grid = 5
''',

    'figure-eight': '''\
# Constant structure d/dz ^ d/dth on R^4 and the immersed surface (sin 2t, sin t, t, th).
# TX^perp = span(d/dth) has rank 1 everywhere: X is regular and coisotropic.
[scene]
name = figure-eight
seed = 0
description = figure-eight times a line in R^4; regular with rank 1

[poisson]
dim = 4
variables = x y z th
domain = -4 4, -4 4, -4 4, -4 10
entries =
    3 4 "1"

[submanifold]
params = t th
components = "sin(2*t)" "sin(t)" "t" "th"
domain = -3 3, 0 6
grid = 3

[complement]
mode = coisotropic
''',

    'coiso-line': '''\
# Constant structure d/dx ^ d/dy on R^3 and the x-axis.
# TX^perp = TX, so the line is coisotropic; its saturation is the plane z = 0.
[scene]
name = coiso-line
seed = 0
description = coisotropic line in (R^3, d/dx ^ d/dy)

[poisson]
dim = 3
variables = x y z
domain = -3 3, -3 3, -3 3
entries =
    1 2 "1"

[submanifold]
params = u
components = "u" "0" "0"
domain = -1 1
grid = 3

[flow]
xi_radius = 0.2

[complement]
mode = coisotropic

[model]
xi_radius = 0.2
gauge = gotay
''',

    'transversal-ray': '''\
# Lie-Poisson structure of so(3)* and a segment of the x-axis away from the origin.
# TX + TX^perp = R^3 with TX^perp = span(e2, e3): a Poisson transversal with open saturation.
[scene]
name = transversal-ray
seed = 0
description = Poisson transversal ray in so(3)*

''' + _SO3 + '''
[submanifold]
params = t
components = "t + 1" "0" "0"
domain = -0.5 0.5
grid = 3

[flow]
xi_radius = 0.05

[model]
xi_radius = 0.05
''',

    'sympl-plane': '''\
# Symplectic R^4 and the coordinate plane x3 = x4 = 0, a symplectic submanifold.
# Every submanifold of a symplectic manifold is regular; this one is a Poisson transversal.
[scene]
name = sympl-plane
seed = 0
description = symplectic plane in symplectic R^4

[poisson]
dim = 4
domain = -3 3, -3 3, -3 3, -3 3
entries =
    1 2 "1"
    3 4 "1"

[submanifold]
params = u v
components = "u" "v" "0" "0"
domain = -1 1, -1 1
grid = 3

[flow]
xi_radius = 0.2

[model]
xi_radius = 0.2
''',

    'zero-structure': '''\
# The zero Poisson structure on R^3 and a line: TX^perp = 0 and the saturation is X itself.
[scene]
name = zero-structure
seed = 0
description = line for the zero Poisson structure

[poisson]
dim = 3
variables = x y z
domain = -2 2, -2 2, -2 2
entries =

[submanifold]
params = u
components = "u" "u" "0"
domain = -1 1
grid = 3
''',

    'gotay-presymplectic': '''\
# Presymplectic form dx ^ dy on R^3 with kernel span(d/dz).
# Its coisotropic embedding lives on R^3 x R with the zero section coisotropic.
[scene]
name = gotay-presymplectic
seed = 0
description = coisotropic embedding of (R^3, dx ^ dy)

[presymplectic]
dim = 3
variables = x y z
domain = -1 1, -1 1, -1 1
entries =
    1 2 "1"
grid = 3
''',

    'so3-sphere': '''\
# Lie-Poisson structure of so(3)* and the unit sphere, a coadjoint orbit.
# The sphere is a Poisson submanifold: TX^perp = 0 and the saturation is X.
[scene]
name = so3-sphere
seed = 0
description = unit sphere in so(3)*

''' + _SO3 + '''
[submanifold]
params = a b
components = "cos(a)*cos(b)" "cos(a)*sin(b)" "sin(a)"
domain = -1 1, 0 3
grid = 3
''',

    'isotropic-line': '''\
# Symplectic R^4 with d/dx1 ^ d/dx3 + d/dx2 ^ d/dx4 and the x1-axis.
# TX^perp = span(e1, e2, e4) meets TX in the rank-1 characteristic line: a constant-rank pre-Poisson line.
[scene]
name = isotropic-line
seed = 0
description = pre-Poisson line in symplectic R^4

[poisson]
dim = 4
domain = -3 3, -3 3, -3 3, -3 3
entries =
    1 3 "1"
    2 4 "1"

[submanifold]
params = u
components = "u" "0" "0" "0"
domain = -1 1
grid = 3

[flow]
xi_radius = 0.1

[complement]
mode = pre_poisson

[model]
xi_radius = 0.1
''',
}


def fixture_names() -> List[str]:
    return list(FIXTURES)


def fixture_text(name: str) -> str:
    """The scene text of a shipped fixture.

    Raises:
        SceneError: for unknown names.
    """
    if name not in FIXTURES:
        raise SceneError(f'unknown fixture {name!r}; known fixtures: {", ".join(FIXTURES)}')
    return FIXTURES[name]
