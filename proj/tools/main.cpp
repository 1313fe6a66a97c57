#include <iostream>

int main() {
    std::cout << "bgnn cli placeholder\n";
    return 0;
}
