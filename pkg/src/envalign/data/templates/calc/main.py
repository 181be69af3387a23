from calc.ops import add, clamp, scale
from calc.report import render


def main():
    rows = [(x, add(x, 2), clamp(x, 0, 5), scale(x)) for x in range(4)]
    print(render(rows))


if __name__ == "__main__":
    main()
